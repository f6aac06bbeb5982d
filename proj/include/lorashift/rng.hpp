#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "lorashift/linalg.hpp"

namespace lorashift {

/// Seeded Gaussian source. The engine is std::mt19937_64, whose output
/// sequence is fixed by the C++ standard; Gaussians come from Box–Muller
/// (cosine branch only), so every normal() consumes exactly two engine draws.
class SeededRng {
public:
    static constexpr std::string_view algorithm_id = "mt19937_64+box-muller-cos/2-draws-per-normal";

    explicit SeededRng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Standard normal: sqrt(-2 ln u1)·cos(2π u2) with u1 ∈ (0, 1].
    double normal();

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

/// rows×cols matrix of i.i.d. N(0, scale²) entries, filled row-major.
/// Consumes 2·rows·cols engine draws.
Matrix random_matrix(SeededRng& rng, Eigen::Index rows, Eigen::Index cols, double scale);

}  // namespace lorashift
