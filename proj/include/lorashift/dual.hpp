#pragma once

// Forward-mode dual scalar: value + tangent·ε with ε² = 0.
//
// The value part of every operation is computed with exactly the same
// floating-point expression as the plain `double` path, so a network run
// on Dual scalars reproduces the base trajectory bit for bit while the
// tangent carries the directional derivative DF(u)[v].

#include <cmath>

#include <Eigen/Core>

namespace lorashift {

struct Dual {
    double value = 0.0;
    double tangent = 0.0;

    constexpr Dual() = default;
    // Implicit: a plain constant is a dual with zero tangent.
    constexpr Dual(double v) : value(v) {}
    constexpr Dual(double v, double t) : value(v), tangent(t) {}

    friend constexpr Dual operator+(const Dual& a, const Dual& b) {
        return {a.value + b.value, a.tangent + b.tangent};
    }
    friend constexpr Dual operator-(const Dual& a, const Dual& b) {
        return {a.value - b.value, a.tangent - b.tangent};
    }
    friend constexpr Dual operator-(const Dual& a) { return {-a.value, -a.tangent}; }
    friend constexpr Dual operator*(const Dual& a, const Dual& b) {
        return {a.value * b.value, a.tangent * b.value + a.value * b.tangent};
    }
    friend constexpr Dual operator/(const Dual& a, const Dual& b) {
        const double q = a.value / b.value;
        return {q, (a.tangent - q * b.tangent) / b.value};
    }

    constexpr Dual& operator+=(const Dual& o) { return *this = *this + o; }
    constexpr Dual& operator-=(const Dual& o) { return *this = *this - o; }
    constexpr Dual& operator*=(const Dual& o) { return *this = *this * o; }
    constexpr Dual& operator/=(const Dual& o) { return *this = *this / o; }

    friend constexpr bool operator==(const Dual& a, const Dual& b) = default;
};

inline Dual tanh(const Dual& x) {
    const double t = std::tanh(x.value);
    return {t, (1.0 - t * t) * x.tangent};
}

inline Dual exp(const Dual& x) {
    const double e = std::exp(x.value);
    return {e, e * x.tangent};
}

inline Dual sqrt(const Dual& x) {
    const double s = std::sqrt(x.value);
    return {s, x.tangent / (2.0 * s)};
}

inline double value_of(double x) { return x; }
inline double value_of(const Dual& x) { return x.value; }

inline double tangent_of(double) { return 0.0; }
inline double tangent_of(const Dual& x) { return x.tangent; }

inline bool is_finite(double x) { return std::isfinite(x); }
inline bool is_finite(const Dual& x) { return std::isfinite(x.value) && std::isfinite(x.tangent); }

}  // namespace lorashift

namespace Eigen {

template <>
struct NumTraits<lorashift::Dual> : NumTraits<double> {
    using Real = lorashift::Dual;
    using NonInteger = lorashift::Dual;
    using Nested = lorashift::Dual;
    using Literal = lorashift::Dual;
    enum {
        IsComplex = 0,
        IsInteger = 0,
        IsSigned = 1,
        RequireInitialization = 1,
        ReadCost = 2,
        AddCost = 2,
        MulCost = 4
    };
};

}  // namespace Eigen
