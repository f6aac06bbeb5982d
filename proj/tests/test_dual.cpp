#include <doctest.h>

#include <vector>

#include "lorashift/primitives.hpp"
#include "lorashift/rng.hpp"

using namespace lorashift;

namespace {

const Primitive kAll[] = {Primitive::matmul, Primitive::add,     Primitive::hadamard, Primitive::tanh,
                          Primitive::softmax, Primitive::rsqrt, Primitive::scale};

bool binary(Primitive p) { return p == Primitive::matmul || p == Primitive::add || p == Primitive::hadamard; }

constexpr double kFactor = -1.7;

std::vector<DualTensor> random_inputs(Primitive p, SeededRng& rng) {
    std::vector<DualTensor> in;
    const Eigen::Index rows = 3, cols = 4;
    Matrix x = random_matrix(rng, rows, cols, 1.0);
    if (p == Primitive::rsqrt) x = (x.array().abs() + 0.5).matrix();
    in.emplace_back(x, random_matrix(rng, rows, cols, 1.0));
    if (binary(p)) {
        const Eigen::Index r2 = p == Primitive::matmul ? cols : rows;
        const Eigen::Index c2 = p == Primitive::matmul ? 2 : cols;
        in.emplace_back(random_matrix(rng, r2, c2, 1.0), random_matrix(rng, r2, c2, 1.0));
    }
    return in;
}

Matrix plain_at(Primitive p, const std::vector<DualTensor>& in, double t) {
    std::vector<Matrix> moved;
    for (const auto& d : in) moved.push_back(d.primal + t * d.tangent);
    return evaluate_primitive(p, moved, kFactor);
}

}  // namespace

TEST_CASE("tanh at zero has unit derivative") {
    const DualTensor x(Matrix::Zero(1, 1), Matrix::Ones(1, 1));
    const DualTensor y = apply_primitive(Primitive::tanh, std::span(&x, 1));
    CHECK(y.primal(0, 0) == 0.0);
    CHECK(y.tangent(0, 0) == 1.0);
}

TEST_CASE("softmax of a constant vector along e1 - e2") {
    Matrix t(1, 2);
    t << 1.0, -1.0;
    const DualTensor x(Matrix::Constant(1, 2, 0.3), t);
    const DualTensor y = apply_primitive(Primitive::softmax, std::span(&x, 1));
    CHECK(y.primal(0, 0) == 0.5);
    CHECK(y.primal(0, 1) == 0.5);
    // J = diag(p) - p pᵀ = [[1/4, -1/4], [-1/4, 1/4]], so J·(1, -1) = (1/2, -1/2).
    CHECK(y.tangent(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(y.tangent(0, 1) == doctest::Approx(-0.5).epsilon(1e-15));

    // A single basis direction picks out one Jacobian column.
    Matrix e1(1, 2);
    e1 << 1.0, 0.0;
    const DualTensor x1(Matrix::Constant(1, 2, 0.3), e1);
    const DualTensor y1 = apply_primitive(Primitive::softmax, std::span(&x1, 1));
    CHECK(y1.tangent(0, 0) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(y1.tangent(0, 1) == doctest::Approx(-0.25).epsilon(1e-15));
}

TEST_CASE("every primitive: tangent matches central differences") {
    SeededRng rng(31);
    for (Primitive p : kAll) {
        CAPTURE(to_string(p));
        for (int trial = 0; trial < 5; ++trial) {
            const auto in = random_inputs(p, rng);
            const DualTensor out = apply_primitive(p, in, kFactor);
            const double h = 1e-6;
            const Matrix fd = (plain_at(p, in, h) - plain_at(p, in, -h)) / (2.0 * h);
            const double rel = (out.tangent - fd).norm() / (1.0 + fd.norm());
            CHECK(rel <= 1e-6);
        }
    }
}

TEST_CASE("every primitive: primal equals plain evaluation bit for bit") {
    SeededRng rng(32);
    for (Primitive p : kAll) {
        CAPTURE(to_string(p));
        const auto in = random_inputs(p, rng);
        CHECK(apply_primitive(p, in, kFactor).primal == plain_at(p, in, 0.0));
    }
}

TEST_CASE("tangent rules are linear in the input tangents") {
    SeededRng rng(33);
    for (Primitive p : kAll) {
        CAPTURE(to_string(p));
        auto in = random_inputs(p, rng);
        const Matrix once = apply_primitive(p, in, kFactor).tangent;
        for (auto& d : in) d.tangent *= 2.0;
        const Matrix twice = apply_primitive(p, in, kFactor).tangent;
        CHECK((twice - 2.0 * once).norm() <= 1e-14 * (2.0 * once).norm());
    }
}

TEST_CASE("constants carry exactly zero tangent") {
    SeededRng rng(34);
    const DualTensor c = DualTensor::constant(random_matrix(rng, 2, 3, 1.0));
    CHECK(c.tangent.isZero(0.0));
    const DualTensor y = apply_primitive(Primitive::tanh, std::span(&c, 1));
    CHECK(y.tangent.isZero(0.0));
}

TEST_CASE("rsqrt of a non-positive value is a degenerate input") {
    const DualTensor zero(Matrix::Zero(1, 1), Matrix::Ones(1, 1));
    CHECK_THROWS_AS(apply_primitive(Primitive::rsqrt, std::span(&zero, 1)), DegenerateInputError);
    const DualTensor neg(Matrix::Constant(1, 1, -2.0), Matrix::Ones(1, 1));
    CHECK_THROWS_AS(apply_primitive(Primitive::rsqrt, std::span(&neg, 1)), DegenerateInputError);
}

TEST_CASE("shape and arity errors") {
    const DualTensor a = DualTensor::constant(Matrix::Ones(2, 3));
    const DualTensor b = DualTensor::constant(Matrix::Ones(2, 3));
    const DualTensor pair[] = {a, b};
    CHECK_THROWS_AS(apply_primitive(Primitive::matmul, pair), DimensionError);
    CHECK_THROWS_AS(apply_primitive(Primitive::add, std::span(&a, 1)), InputError);
    CHECK_THROWS_AS(DualTensor(Matrix::Ones(2, 2), Matrix::Ones(2, 3)), DimensionError);
}

TEST_CASE("dual scalar arithmetic") {
    const Dual x(3.0, 1.0), y(2.0, 0.0);
    CHECK(x * x == Dual(9.0, 6.0));
    CHECK(x / y == Dual(1.5, 0.5));
    CHECK(y / x == Dual(2.0 / 3.0, -2.0 / 9.0));
    CHECK(exp(Dual(0.0, 2.0)) == Dual(1.0, 2.0));
    CHECK(sqrt(Dual(4.0, 1.0)) == Dual(2.0, 0.25));
    CHECK(rsqrt(Dual(4.0, 1.0)) == Dual(0.5, -0.0625));
}

TEST_CASE("gelu_tanh derivative matches central differences") {
    for (double x : {-3.0, -0.7, 0.0, 0.4, 2.5}) {
        const Dual g = gelu_tanh(Dual(x, 1.0));
        const double h = 1e-6;
        const double fd = (gelu_tanh(x + h) - gelu_tanh(x - h)) / (2.0 * h);
        CHECK(g.value == gelu_tanh(x));
        CHECK(g.tangent == doctest::Approx(fd).epsilon(1e-8));
    }
}
