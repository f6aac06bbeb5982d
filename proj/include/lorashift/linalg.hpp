#pragma once

// Dense row-major matrices templated on scalar (double or Dual), with
// reductions written as explicit left-to-right loops. Eigen supplies
// storage and elementwise expressions; it never chooses a summation order,
// so results are reproducible and the Dual value path matches the double
// path exactly.

#include <cmath>
#include <string>
#include <type_traits>

#include <Eigen/Core>

#include "lorashift/dual.hpp"
#include "lorashift/error.hpp"

namespace lorashift {

template <typename S>
using MatrixX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using VectorX = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;
using DualMatrix = MatrixX<Dual>;
using DualVector = VectorX<Dual>;

/// Scalar type of a product of an `A` and a `B`.
template <typename A, typename B>
using Promote = std::conditional_t<std::is_same_v<A, double> && std::is_same_v<B, double>, double, Dual>;

template <typename Derived>
std::string shape_string(const Eigen::EigenBase<Derived>& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

template <typename DA, typename DB>
void require_same_shape(const Eigen::EigenBase<DA>& a, const Eigen::EigenBase<DB>& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
    }
}

/// a·b. Each output entry sums over k in increasing order.
template <typename A, typename B>
MatrixX<Promote<A, B>> matmul(const MatrixX<A>& a, const MatrixX<B>& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: inner dimensions differ, " + shape_string(a) + " * " + shape_string(b));
    }
    using R = Promote<A, B>;
    MatrixX<R> out(a.rows(), b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < b.cols(); ++j) {
            R acc = R(0.0);
            for (Eigen::Index k = 0; k < a.cols(); ++k) acc = acc + a(i, k) * b(k, j);
            out(i, j) = acc;
        }
    }
    return out;
}

/// a·bᵀ, same summation order as matmul. Applies a weight W (d_out × d_in)
/// to a stack of row vectors a (n × d_in).
template <typename A, typename B>
MatrixX<Promote<A, B>> matmul_transposed(const MatrixX<A>& a, const MatrixX<B>& b) {
    if (a.cols() != b.cols()) {
        throw DimensionError("matmul_transposed: inner dimensions differ, " + shape_string(a) + " * (" +
                             shape_string(b) + ")^T");
    }
    using R = Promote<A, B>;
    MatrixX<R> out(a.rows(), b.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < b.rows(); ++j) {
            R acc = R(0.0);
            for (Eigen::Index k = 0; k < a.cols(); ++k) acc = acc + a(i, k) * b(j, k);
            out(i, j) = acc;
        }
    }
    return out;
}

template <typename A, typename B>
VectorX<Promote<A, B>> matvec(const MatrixX<A>& m, const VectorX<B>& v) {
    if (m.cols() != v.size()) {
        throw DimensionError("matvec: " + shape_string(m) + " * " + shape_string(v));
    }
    using R = Promote<A, B>;
    VectorX<R> out(m.rows());
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        R acc = R(0.0);
        for (Eigen::Index k = 0; k < m.cols(); ++k) acc = acc + m(i, k) * v(k);
        out(i) = acc;
    }
    return out;
}

template <typename DA, typename DB>
auto dot(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
    if (a.size() != b.size()) {
        throw DimensionError("dot: " + shape_string(a) + " vs " + shape_string(b));
    }
    using R = Promote<typename DA::Scalar, typename DB::Scalar>;
    R acc = R(0.0);
    for (Eigen::Index k = 0; k < a.size(); ++k) acc = acc + a(k) * b(k);
    return acc;
}

template <typename S>
MatrixX<S> add(const MatrixX<S>& a, const MatrixX<S>& b) {
    require_same_shape(a, b, "add");
    return a + b;
}

template <typename S>
MatrixX<S> hadamard(const MatrixX<S>& a, const MatrixX<S>& b) {
    require_same_shape(a, b, "hadamard");
    return a.cwiseProduct(b);
}

template <typename S>
MatrixX<S> scale(const MatrixX<S>& a, double c) {
    return a.unaryExpr([c](const S& x) { return S(c) * x; });
}

/// ⟨a, b⟩_F = tr(aᵀb) = Σᵢⱼ aᵢⱼ bᵢⱼ, summed in row-major order.
inline double frobenius_inner(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "frobenius_inner");
    double acc = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j) acc += a(i, j) * b(i, j);
    return acc;
}

inline double frobenius_norm(const Matrix& a) { return std::sqrt(frobenius_inner(a, a)); }

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            if (!is_finite(m(i, j))) return false;
    return true;
}

inline DualMatrix make_dual(const Matrix& primal, const Matrix& tangent) {
    require_same_shape(primal, tangent, "make_dual");
    DualMatrix out(primal.rows(), primal.cols());
    for (Eigen::Index i = 0; i < primal.rows(); ++i)
        for (Eigen::Index j = 0; j < primal.cols(); ++j) out(i, j) = Dual(primal(i, j), tangent(i, j));
    return out;
}

/// Lifts a constant: zero tangent.
template <typename S, typename Derived>
MatrixX<S> lift(const Eigen::MatrixBase<Derived>& m) {
    MatrixX<S> out(m.rows(), m.cols());
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) out(i, j) = S(m(i, j));
    return out;
}

template <typename Derived>
auto primal_part(const Eigen::MatrixBase<Derived>& m) {
    return m.unaryExpr([](const auto& x) { return value_of(x); }).eval();
}

template <typename Derived>
auto tangent_part(const Eigen::MatrixBase<Derived>& m) {
    return m.unaryExpr([](const auto& x) { return tangent_of(x); }).eval();
}

}  // namespace lorashift
