#pragma once

// LoRA perturbations. A single adapter contributes ΔW = (α/r)·B·A at one
// site; a LoraSet is the joint perturbation Δ over distinct sites, with a
// global scale ε so one set can drive a whole ε-sweep.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "lorashift/model.hpp"
#include "lorashift/rng.hpp"

namespace lorashift {

struct LoraAdapter {
    SiteId site;
    Matrix b;  // d_out × r
    Matrix a;  // r × d_in
    double alpha = 1.0;
    int rank = 1;

    /// Throws DimensionError unless b.cols == a.rows == rank.
    void validate() const;
    /// Throws DimensionError unless B, A match the site's weight shape.
    void validate_against(const TransformerModel& model) const;

    /// r exceeds min(d_in, d_out): ΔW cannot reach rank r.
    bool rank_deficient() const { return rank > std::min(b.rows(), a.cols()); }
};

/// (α/r)·B·A
Matrix delta_w(const LoraAdapter& adapter);

/// Same ΔW at rank `new_rank` ≥ rank: B gains zero columns, A zero rows.
/// The α/r factor changes accordingly.
LoraAdapter pad_rank(const LoraAdapter& adapter, int new_rank);

/// Gaussian B then A, entries N(0, scale²), drawn in that order.
LoraAdapter random_lora(SeededRng& rng, const TransformerModel& model, const SiteId& site, int rank, double alpha,
                        double scale);

class LoraSet {
public:
    LoraSet() = default;
    explicit LoraSet(std::vector<LoraAdapter> adapters, double epsilon = 1.0);

    /// Throws SiteError if the site already carries an adapter.
    void insert(LoraAdapter adapter);

    double epsilon() const noexcept { return epsilon_; }
    const std::map<SiteId, LoraAdapter>& adapters() const noexcept { return adapters_; }
    bool empty() const noexcept { return adapters_.empty(); }
    std::size_t size() const noexcept { return adapters_.size(); }

    /// ε·ΔW for the site's adapter.
    Matrix effective_delta(const SiteId& site) const;

    friend LoraSet scale(const LoraSet& set, double epsilon);

private:
    std::map<SiteId, LoraAdapter> adapters_;
    double epsilon_ = 1.0;
};

/// Copy of `set` with its global scale replaced by `epsilon`.
LoraSet scale(const LoraSet& set, double epsilon);

/// Perturbed model with W ← W + ε·ΔW at every adapted site.
TransformerModel apply(const TransformerModel& model, const LoraSet& set);

/// ‖Δ‖ = |ε|·sqrt(Σ_sites ‖ΔW‖_F²)
double perturbation_norm(const LoraSet& set);

inline constexpr int kAdapterFormatVersion = 1;

std::string serialize_adapter(const LoraAdapter& adapter, double epsilon = 1.0);
/// Returns the adapter; `epsilon`, when given, receives the stored ε.
LoraAdapter parse_adapter(const std::string& text, double* epsilon = nullptr);
LoraAdapter load_adapter(const std::filesystem::path& path, double* epsilon = nullptr);

}  // namespace lorashift
