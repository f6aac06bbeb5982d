#include "lorashift/primitives.hpp"

namespace lorashift {

std::string_view to_string(Primitive kind) {
    switch (kind) {
        case Primitive::matmul: return "matmul";
        case Primitive::add: return "add";
        case Primitive::hadamard: return "hadamard";
        case Primitive::tanh: return "tanh";
        case Primitive::softmax: return "softmax";
        case Primitive::rsqrt: return "rsqrt";
        case Primitive::scale: return "scale";
    }
    return "unknown";
}

DualTensor::DualTensor(Matrix p, Matrix t) : primal(std::move(p)), tangent(std::move(t)) {
    require_same_shape(primal, tangent, "DualTensor");
}

DualTensor DualTensor::constant(Matrix p) {
    Matrix zero = Matrix::Zero(p.rows(), p.cols());
    return DualTensor(std::move(p), std::move(zero));
}

DualTensor DualTensor::from_scalars(const DualMatrix& m) { return DualTensor(primal_part(m), tangent_part(m)); }

namespace {

std::size_t arity(Primitive kind) {
    switch (kind) {
        case Primitive::matmul:
        case Primitive::add:
        case Primitive::hadamard: return 2;
        default: return 1;
    }
}

template <typename S>
MatrixX<S> dispatch(Primitive kind, std::span<const MatrixX<S>> in, double factor) {
    switch (kind) {
        case Primitive::matmul: return matmul(in[0], in[1]);
        case Primitive::add: return add(in[0], in[1]);
        case Primitive::hadamard: return hadamard(in[0], in[1]);
        case Primitive::tanh: return tanh_elementwise(in[0]);
        case Primitive::softmax: return softmax_rows(in[0]);
        case Primitive::rsqrt: return rsqrt_elementwise(in[0]);
        case Primitive::scale: return scale(in[0], factor);
    }
    throw InputError("unknown primitive");
}

void check_arity(Primitive kind, std::size_t got) {
    if (got != arity(kind)) {
        throw InputError(std::string(to_string(kind)) + ": expected " + std::to_string(arity(kind)) +
                         " inputs, got " + std::to_string(got));
    }
}

}  // namespace

DualTensor apply_primitive(Primitive kind, std::span<const DualTensor> inputs, double factor) {
    check_arity(kind, inputs.size());
    std::vector<DualMatrix> lifted;
    lifted.reserve(inputs.size());
    for (const auto& t : inputs) lifted.push_back(t.to_scalars());
    return DualTensor::from_scalars(dispatch<Dual>(kind, std::span<const DualMatrix>(lifted), factor));
}

Matrix evaluate_primitive(Primitive kind, std::span<const Matrix> inputs, double factor) {
    check_arity(kind, inputs.size());
    return dispatch<double>(kind, inputs, factor);
}

}  // namespace lorashift
