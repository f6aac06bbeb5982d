#pragma once

// Shared test fixtures: the reference model, seeded adapters, the linear
// chain model and independent oracles (finite differences, closed forms).

#include <functional>
#include <vector>

#include "lorashift/analysis.hpp"
#include "lorashift/lora.hpp"
#include "lorashift/model.hpp"

namespace lorashift::testing {

inline ModelConfig reference_config() {
    ModelConfig c;
    c.n_layers = 4;
    c.d_model = 32;
    c.d_ff = 64;
    c.vocab = 50;
    c.seq_capacity = 16;
    c.activation = Activation::gelu_tanh;
    c.norm = Norm::rmsnorm;
    c.init_scale = 1.0;
    c.seed = 7;
    return c;
}

inline const TransformerModel& reference_model() {
    static const TransformerModel model = build_model(reference_config());
    return model;
}

inline const std::vector<TokenId> kReferenceTokens{3, 1, 4};
inline constexpr TokenId kReferenceReadout = 7;
inline constexpr double kAdapterScale = 0.3;

inline LoraAdapter seeded_adapter(const TransformerModel& model, SiteId site, std::uint64_t seed, int rank = 2,
                                  double alpha = 1.0, double scale = kAdapterScale) {
    SeededRng rng(seed);
    return random_lora(rng, model, site, rank, alpha, scale);
}

/// No activation, no norm: with one position every map downstream of a site is affine.
inline ModelConfig linear_chain_config() {
    ModelConfig c = reference_config();
    c.activation = Activation::identity;
    c.norm = Norm::none;
    c.init_scale = 0.5;
    return c;
}

inline const TransformerModel& linear_chain_model() {
    static const TransformerModel model = build_model(linear_chain_config());
    return model;
}

/// Closed-form Jacobian of h_L with respect to a site output for the linear
/// chain with a single position, from products of the weight matrices.
inline Matrix linear_chain_jacobian(const TransformerModel& model, const SiteId& site) {
    using Dense = Eigen::MatrixXd;
    const int d = model.config().d_model;
    const Dense eye = Dense::Identity(d, d);
    Dense jac = eye;
    for (int l = site.layer; l < model.config().n_layers; ++l) {
        const auto& w = model.layers()[static_cast<std::size_t>(l)];
        const Dense attn = eye + Dense(w.w_o) * Dense(w.w_v);
        const Dense mlp = eye + Dense(w.w_down) * Dense(w.w_up);
        if (l == site.layer) {
            jac = (site.slot == Slot::attn_out ? Dense(mlp) : eye) * jac;
        } else {
            jac = mlp * attn * jac;
        }
    }
    return Matrix(model.final_gain().asDiagonal() * jac);
}

/// Central difference of a vector-valued function of one scalar.
inline Vector central_difference(const std::function<Vector(double)>& f, double h) {
    return (f(h) - f(-h)) / (2.0 * h);
}

inline double central_difference_scalar(const std::function<double(double)>& f, double h) {
    return (f(h) - f(-h)) / (2.0 * h);
}

inline double relative_error(const Vector& got, const Vector& want) {
    return (got - want).norm() / (1.0 + want.norm());
}

}  // namespace lorashift::testing
