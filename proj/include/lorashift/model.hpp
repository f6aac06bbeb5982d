#pragma once

// Seeded single-head decoder-only transformer built from smooth primitives.
//
// Stream layout: one row per position. Each layer is pre-norm:
//   x += attn_out(W_O · softmax_causal(Q Kᵀ/√d) V)
//   x += mlp_down(W_down · act(W_up · norm(x)))
// and the readout is h_L = gain ⊙ norm(x_last), logits = U·h_L.
//
// A LoRA site is the input/output pair of W_O or W_down in one layer.

#include <compare>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lorashift/linalg.hpp"

namespace lorashift {

using TokenId = int;

enum class Activation { tanh, gelu_tanh, identity };
enum class Norm { rmsnorm, none };

std::string to_string(Activation a);
std::string to_string(Norm n);
Activation parse_activation(const std::string& s);
Norm parse_norm(const std::string& s);

/// `identity` activation and `none` norm are only meant for linear test
/// fixtures: with a single position they make everything downstream of a
/// site affine.
struct ModelConfig {
    int n_layers = 4;
    int d_model = 32;
    int d_ff = 64;
    int vocab = 50;
    int seq_capacity = 16;
    Activation activation = Activation::gelu_tanh;
    Norm norm = Norm::rmsnorm;
    double init_scale = 1.0;
    std::uint64_t seed = 7;

    /// Throws ConfigError naming the first bad field.
    void validate() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum class Slot { attn_out, mlp_down };

std::string to_string(Slot s);
Slot parse_slot(const std::string& s);

struct SiteId {
    int layer = 0;
    Slot slot = Slot::attn_out;

    friend auto operator<=>(const SiteId&, const SiteId&) = default;
};

/// "L2.mlp_down"
std::string to_string(const SiteId& site);

struct LayerWeights {
    Matrix w_q, w_k, w_v, w_o;  // d_model × d_model
    Matrix w_up;                // d_ff × d_model
    Matrix w_down;              // d_model × d_ff
};

class TransformerModel {
public:
    /// Validates every shape against `config`.
    TransformerModel(ModelConfig config, Matrix embedding, std::vector<LayerWeights> layers, Vector final_gain,
                     Matrix unembedding);

    const ModelConfig& config() const noexcept { return config_; }
    const Matrix& embedding() const noexcept { return embedding_; }
    const std::vector<LayerWeights>& layers() const noexcept { return layers_; }
    const Vector& final_gain() const noexcept { return final_gain_; }
    /// Row y is the readout direction u_y.
    const Matrix& unembedding() const noexcept { return unembedding_; }

    /// Throws SiteError for a site outside the model.
    const Matrix& site_weight(const SiteId& site) const;
    void require_site(const SiteId& site) const;
    std::vector<SiteId> sites() const;

    /// Input width of the site's weight (d_in); its output width is d_model.
    int site_input_dim(const SiteId& site) const;

    /// Copy with one site weight replaced.
    TransformerModel with_site_weight(const SiteId& site, Matrix weight) const;

    /// Hash of config and weight bytes; identifies the model a trace came from.
    std::uint64_t fingerprint() const noexcept { return fingerprint_; }

    friend bool operator==(const TransformerModel& a, const TransformerModel& b);

private:
    void rehash();

    ModelConfig config_;
    Matrix embedding_;
    std::vector<LayerWeights> layers_;
    Vector final_gain_;
    Matrix unembedding_;
    std::uint64_t fingerprint_ = 0;
};

/// Deterministic weights from config.seed. Draw order: embedding, then per
/// layer W_Q, W_K, W_V, W_O, W_up, W_down, then the final gain, then U.
TransformerModel build_model(const ModelConfig& config);

/// Base-trajectory activations. Per-site matrices hold one row per position.
struct ActivationTrace {
    std::vector<TokenId> tokens;
    std::map<SiteId, Matrix> site_inputs;   // z_l
    std::map<SiteId, Matrix> site_outputs;  // z_{l+1}
    std::vector<Matrix> residuals;          // stream after each layer
    Vector h_final;                         // h_L at the last position
    Vector logits;
    std::uint64_t model_fingerprint = 0;

    const Matrix& input_at(const SiteId& site) const;
    const Matrix& output_at(const SiteId& site) const;
};

ActivationTrace forward(const TransformerModel& model, std::span<const TokenId> tokens);

/// F_l: reruns the network on `tokens` with the site's output replaced by
/// `site_outputs` (one row per position) and returns h_L.
Vector propagate_from_site(const TransformerModel& model, const SiteId& site, const Matrix& site_outputs,
                           std::span<const TokenId> tokens);

/// J_{l+1→L}(x)·v by dual-number propagation around the base trajectory.
Vector jvp_from_site(const TransformerModel& model, const SiteId& site, std::span<const TokenId> tokens,
                     const Matrix& direction);

/// Same, reusing an existing base trace of `model`.
Vector jvp_from_site(const TransformerModel& model, const ActivationTrace& base, const SiteId& site,
                     const Matrix& direction);

/// ℓ(y) = u_yᵀ h.
double logit(const TransformerModel& model, const Vector& h, TokenId y);

void require_token(const TransformerModel& model, TokenId y, const char* what = "token");

}  // namespace lorashift
