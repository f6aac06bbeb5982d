#include "lorashift/rng.hpp"

#include <cmath>
#include <numbers>

namespace lorashift {

double SeededRng::normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Matrix random_matrix(SeededRng& rng, Eigen::Index rows, Eigen::Index cols, double scale) {
    if (!(scale > 0.0)) throw InputError("random_matrix: scale must be positive");
    if (rows < 1 || cols < 1) throw DimensionError("random_matrix: shape must be positive");
    Matrix out(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = scale * rng.normal();
    return out;
}

}  // namespace lorashift
