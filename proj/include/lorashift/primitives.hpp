#pragma once

// The smooth primitives the toy transformer is built from. Each is a
// template over the scalar type, so evaluating on Dual scalars yields the
// exact directional derivative alongside the plain value.

#include <cmath>
#include <span>
#include <string_view>

#include "lorashift/linalg.hpp"

namespace lorashift {

inline double rsqrt(double x) {
    if (!(x > 0.0)) throw DegenerateInputError("rsqrt: argument must be positive, got " + std::to_string(x));
    return 1.0 / std::sqrt(x);
}

inline Dual rsqrt(const Dual& x) {
    const double r = rsqrt(x.value);
    return {r, -0.5 * r / x.value * x.tangent};
}

template <typename S>
MatrixX<S> tanh_elementwise(const MatrixX<S>& a) {
    using std::tanh;
    return a.unaryExpr([](const S& x) { return S(tanh(x)); });
}

template <typename S>
MatrixX<S> rsqrt_elementwise(const MatrixX<S>& a) {
    return a.unaryExpr([](const S& x) { return S(rsqrt(x)); });
}

/// Softmax of the first `len` entries of `row`; entries beyond `len` are
/// outside the support and come back as exact zeros.
template <typename S, typename Derived>
VectorX<S> softmax_prefix(const Eigen::MatrixBase<Derived>& row, Eigen::Index len) {
    using std::exp;
    const Eigen::Index n = row.size();
    VectorX<S> out = VectorX<S>::Constant(n, S(0.0));
    // The shift is a constant: softmax is invariant to it, so it carries no tangent.
    double shift = value_of(row(0));
    for (Eigen::Index k = 1; k < len; ++k) shift = std::max(shift, value_of(row(k)));
    S total = S(0.0);
    for (Eigen::Index k = 0; k < len; ++k) {
        out(k) = exp(row(k) - S(shift));
        total = total + out(k);
    }
    for (Eigen::Index k = 0; k < len; ++k) out(k) = out(k) / total;
    return out;
}

/// Row-wise softmax over the full row.
template <typename S>
MatrixX<S> softmax_rows(const MatrixX<S>& a) {
    MatrixX<S> out(a.rows(), a.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) out.row(i) = softmax_prefix<S>(a.row(i).transpose(), a.cols()).transpose();
    return out;
}

/// tanh-form GELU: 0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³))).
template <typename S>
S gelu_tanh(const S& x) {
    using std::tanh;
    constexpr double kSqrt2OverPi = 0.79788456080286535588;
    const S inner = S(kSqrt2OverPi) * (x + S(0.044715) * x * x * x);
    return S(0.5) * x * (S(1.0) + tanh(inner));
}

// ---------------------------------------------------------------------------
// Tensor-level dual view, used to check tangent rules primitive by primitive.

enum class Primitive { matmul, add, hadamard, tanh, softmax, rsqrt, scale };

std::string_view to_string(Primitive kind);

/// A primal matrix together with a tangent of the same shape.
struct DualTensor {
    Matrix primal;
    Matrix tangent;

    DualTensor() = default;
    DualTensor(Matrix p, Matrix t);

    /// Constant: tangent exactly zero.
    static DualTensor constant(Matrix p);

    DualMatrix to_scalars() const { return make_dual(primal, tangent); }
    static DualTensor from_scalars(const DualMatrix& m);
};

/// Evaluates one primitive on dual inputs. matmul, add and hadamard take two
/// inputs; the rest take one. `factor` is the multiplier for `scale`.
DualTensor apply_primitive(Primitive kind, std::span<const DualTensor> inputs, double factor = 1.0);

/// Plain evaluation of the same primitive on primal values only.
Matrix evaluate_primitive(Primitive kind, std::span<const Matrix> inputs, double factor = 1.0);

}  // namespace lorashift
