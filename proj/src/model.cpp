#include "lorashift/model.hpp"

#include <cmath>
#include <cstring>
#include <functional>
#include <string_view>

#include "lorashift/primitives.hpp"
#include "lorashift/rng.hpp"

namespace lorashift {

std::string to_string(Activation a) {
    switch (a) {
        case Activation::tanh: return "tanh";
        case Activation::gelu_tanh: return "gelu-tanh";
        case Activation::identity: return "identity";
    }
    return "?";
}

std::string to_string(Norm n) { return n == Norm::rmsnorm ? "rmsnorm" : "none"; }

Activation parse_activation(const std::string& s) {
    if (s == "tanh") return Activation::tanh;
    if (s == "gelu-tanh") return Activation::gelu_tanh;
    if (s == "identity") return Activation::identity;
    throw ConfigError("activation", "unknown activation '" + s + "' (expected tanh, gelu-tanh or identity)");
}

Norm parse_norm(const std::string& s) {
    if (s == "rmsnorm") return Norm::rmsnorm;
    if (s == "none") return Norm::none;
    throw ConfigError("norm", "unknown norm '" + s + "' (expected rmsnorm or none)");
}

std::string to_string(Slot s) { return s == Slot::attn_out ? "attn_out" : "mlp_down"; }

Slot parse_slot(const std::string& s) {
    if (s == "attn_out") return Slot::attn_out;
    if (s == "mlp_down") return Slot::mlp_down;
    throw SiteError("unknown slot '" + s + "' (expected attn_out or mlp_down)");
}

std::string to_string(const SiteId& site) { return "L" + std::to_string(site.layer) + "." + to_string(site.slot); }

void ModelConfig::validate() const {
    auto positive = [](int v, const char* field) {
        if (v < 1) throw ConfigError(field, "must be >= 1, got " + std::to_string(v));
    };
    positive(n_layers, "n_layers");
    positive(d_model, "d_model");
    positive(d_ff, "d_ff");
    positive(vocab, "vocab");
    positive(seq_capacity, "seq_capacity");
    if (!(init_scale > 0.0) || !std::isfinite(init_scale)) {
        throw ConfigError("init_scale", "must be positive and finite");
    }
}

// ---------------------------------------------------------------------------

namespace {

void require_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols, const std::string& name) {
    if (m.rows() != rows || m.cols() != cols) {
        throw DimensionError(name + ": expected " + std::to_string(rows) + "x" + std::to_string(cols) + ", got " +
                             shape_string(m));
    }
}

void hash_bytes(std::string& buf, const void* p, std::size_t n) { buf.append(static_cast<const char*>(p), n); }

void hash_matrix(std::string& buf, const Matrix& m) {
    const Eigen::Index dims[2] = {m.rows(), m.cols()};
    hash_bytes(buf, dims, sizeof dims);
    hash_bytes(buf, m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
}

}  // namespace

TransformerModel::TransformerModel(ModelConfig config, Matrix embedding, std::vector<LayerWeights> layers,
                                   Vector final_gain, Matrix unembedding)
    : config_(std::move(config)),
      embedding_(std::move(embedding)),
      layers_(std::move(layers)),
      final_gain_(std::move(final_gain)),
      unembedding_(std::move(unembedding)) {
    config_.validate();
    const int d = config_.d_model, f = config_.d_ff, v = config_.vocab;
    require_shape(embedding_, v, d, "embedding");
    if (static_cast<int>(layers_.size()) != config_.n_layers) {
        throw DimensionError("expected " + std::to_string(config_.n_layers) + " layers, got " +
                             std::to_string(layers_.size()));
    }
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& w = layers_[l];
        const std::string p = "layer " + std::to_string(l) + " ";
        require_shape(w.w_q, d, d, p + "W_Q");
        require_shape(w.w_k, d, d, p + "W_K");
        require_shape(w.w_v, d, d, p + "W_V");
        require_shape(w.w_o, d, d, p + "W_O");
        require_shape(w.w_up, f, d, p + "W_up");
        require_shape(w.w_down, d, f, p + "W_down");
    }
    if (final_gain_.size() != d) throw DimensionError("final gain: expected length " + std::to_string(d));
    require_shape(unembedding_, v, d, "unembedding");
    rehash();
}

void TransformerModel::rehash() {
    std::string buf;
    const int counts[6] = {config_.n_layers, config_.d_model, config_.d_ff, config_.vocab,
                           static_cast<int>(config_.activation), static_cast<int>(config_.norm)};
    hash_bytes(buf, counts, sizeof counts);
    hash_matrix(buf, embedding_);
    for (const auto& w : layers_) {
        for (const Matrix* m : {&w.w_q, &w.w_k, &w.w_v, &w.w_o, &w.w_up, &w.w_down}) hash_matrix(buf, *m);
    }
    hash_bytes(buf, final_gain_.data(), sizeof(double) * static_cast<std::size_t>(final_gain_.size()));
    hash_matrix(buf, unembedding_);
    fingerprint_ = std::hash<std::string_view>{}(buf);
}

void TransformerModel::require_site(const SiteId& site) const {
    if (site.layer < 0 || site.layer >= config_.n_layers) {
        throw SiteError("site " + to_string(site) + " outside model with " + std::to_string(config_.n_layers) +
                        " layers");
    }
}

const Matrix& TransformerModel::site_weight(const SiteId& site) const {
    require_site(site);
    const auto& w = layers_[static_cast<std::size_t>(site.layer)];
    return site.slot == Slot::attn_out ? w.w_o : w.w_down;
}

int TransformerModel::site_input_dim(const SiteId& site) const {
    require_site(site);
    return site.slot == Slot::attn_out ? config_.d_model : config_.d_ff;
}

std::vector<SiteId> TransformerModel::sites() const {
    std::vector<SiteId> out;
    for (int l = 0; l < config_.n_layers; ++l) {
        out.push_back({l, Slot::attn_out});
        out.push_back({l, Slot::mlp_down});
    }
    return out;
}

TransformerModel TransformerModel::with_site_weight(const SiteId& site, Matrix weight) const {
    const Matrix& current = site_weight(site);
    require_shape(weight, current.rows(), current.cols(), "site " + to_string(site) + " weight");
    TransformerModel out = *this;
    auto& w = out.layers_[static_cast<std::size_t>(site.layer)];
    (site.slot == Slot::attn_out ? w.w_o : w.w_down) = std::move(weight);
    out.rehash();
    return out;
}

bool operator==(const TransformerModel& a, const TransformerModel& b) {
    if (!(a.config_ == b.config_) || a.embedding_ != b.embedding_ || a.final_gain_ != b.final_gain_ ||
        a.unembedding_ != b.unembedding_ || a.layers_.size() != b.layers_.size()) {
        return false;
    }
    for (std::size_t l = 0; l < a.layers_.size(); ++l) {
        const auto& x = a.layers_[l];
        const auto& y = b.layers_[l];
        if (x.w_q != y.w_q || x.w_k != y.w_k || x.w_v != y.w_v || x.w_o != y.w_o || x.w_up != y.w_up ||
            x.w_down != y.w_down) {
            return false;
        }
    }
    return true;
}

TransformerModel build_model(const ModelConfig& config) {
    config.validate();
    SeededRng rng(config.seed);
    const int d = config.d_model, f = config.d_ff, v = config.vocab;
    const double s = config.init_scale;
    // Fan-in scaling keeps the stream O(1) regardless of width.
    auto weight = [&](int rows, int cols) { return random_matrix(rng, rows, cols, s / std::sqrt(double(cols))); };

    Matrix embedding = random_matrix(rng, v, d, s);
    std::vector<LayerWeights> layers;
    for (int l = 0; l < config.n_layers; ++l) {
        LayerWeights w;
        w.w_q = weight(d, d);
        w.w_k = weight(d, d);
        w.w_v = weight(d, d);
        w.w_o = weight(d, d);
        w.w_up = weight(f, d);
        w.w_down = weight(d, f);
        layers.push_back(std::move(w));
    }
    Vector gain(d);
    for (int k = 0; k < d; ++k) gain(k) = 1.0 + 0.1 * rng.normal();
    Matrix unembedding = weight(v, d);
    return TransformerModel(config, std::move(embedding), std::move(layers), std::move(gain), std::move(unembedding));
}

// ---------------------------------------------------------------------------

const Matrix& ActivationTrace::input_at(const SiteId& site) const {
    auto it = site_inputs.find(site);
    if (it == site_inputs.end()) throw SiteError("trace has no site " + to_string(site));
    return it->second;
}

const Matrix& ActivationTrace::output_at(const SiteId& site) const {
    auto it = site_outputs.find(site);
    if (it == site_outputs.end()) throw SiteError("trace has no site " + to_string(site));
    return it->second;
}

void require_token(const TransformerModel& model, TokenId y, const char* what) {
    if (y < 0 || y >= model.config().vocab) {
        throw InputError(std::string(what) + " id " + std::to_string(y) + " outside vocabulary of size " +
                         std::to_string(model.config().vocab));
    }
}

namespace {

void require_tokens(const TransformerModel& model, std::span<const TokenId> tokens) {
    if (tokens.empty()) throw InputError("token list is empty");
    if (static_cast<int>(tokens.size()) > model.config().seq_capacity) {
        throw InputError("token list of length " + std::to_string(tokens.size()) + " exceeds seq capacity " +
                         std::to_string(model.config().seq_capacity));
    }
    for (TokenId t : tokens) require_token(model, t);
}

/// Row-wise RMSNorm without gain: x / sqrt(mean(x²)). Raises on a zero row.
template <typename S>
MatrixX<S> normalize_rows(const MatrixX<S>& x, Norm norm) {
    if (norm == Norm::none) return x;
    MatrixX<S> out(x.rows(), x.cols());
    const S width = S(static_cast<double>(x.cols()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        S sum_sq = S(0.0);
        for (Eigen::Index k = 0; k < x.cols(); ++k) sum_sq = sum_sq + x(i, k) * x(i, k);
        if (!(value_of(sum_sq) > 0.0)) throw DegenerateInputError("rmsnorm: zero vector at position " + std::to_string(i));
        const S r = rsqrt(sum_sq / width);
        for (Eigen::Index k = 0; k < x.cols(); ++k) out(i, k) = x(i, k) * r;
    }
    return out;
}

template <typename S>
MatrixX<S> activate(const MatrixX<S>& x, Activation a) {
    switch (a) {
        case Activation::tanh: return tanh_elementwise(x);
        case Activation::gelu_tanh: return x.unaryExpr([](const S& v) { return gelu_tanh(v); });
        case Activation::identity: return x;
    }
    return x;
}

template <typename S>
MatrixX<S> causal_attention(const MatrixX<S>& normed, const LayerWeights& w) {
    const MatrixX<S> q = matmul_transposed(normed, w.w_q);
    const MatrixX<S> k = matmul_transposed(normed, w.w_k);
    const MatrixX<S> v = matmul_transposed(normed, w.w_v);
    const MatrixX<S> scores = scale(matmul_transposed(q, k), 1.0 / std::sqrt(static_cast<double>(normed.cols())));
    MatrixX<S> probs(scores.rows(), scores.cols());
    for (Eigen::Index p = 0; p < scores.rows(); ++p) {
        probs.row(p) = softmax_prefix<S>(scores.row(p).transpose(), p + 1).transpose();
    }
    return matmul(probs, v);
}

/// Substitution of one site's output during a run.
template <typename S>
struct Substitution {
    SiteId site;
    const MatrixX<S>* outputs;
};

/// Single forward pass. Returns h_L; fills `trace` when given (double only).
template <typename S>
VectorX<S> run(const TransformerModel& model, std::span<const TokenId> tokens, const Substitution<S>* sub,
               ActivationTrace* trace) {
    const auto& cfg = model.config();
    const auto n = static_cast<Eigen::Index>(tokens.size());
    MatrixX<S> x(n, cfg.d_model);
    for (Eigen::Index p = 0; p < n; ++p) {
        for (int k = 0; k < cfg.d_model; ++k) x(p, k) = S(model.embedding()(tokens[static_cast<std::size_t>(p)], k));
    }

    auto site_output = [&](const SiteId& site, const MatrixX<S>& z, const Matrix& weight) {
        MatrixX<S> out = matmul_transposed(z, weight);
        if (sub != nullptr && sub->site == site) {
            require_same_shape(out, *sub->outputs, "site output substitution");
            out = *sub->outputs;
        }
        if constexpr (std::is_same_v<S, double>) {
            if (trace != nullptr) {
                trace->site_inputs[site] = z;
                trace->site_outputs[site] = out;
            }
        }
        return out;
    };

    for (int l = 0; l < cfg.n_layers; ++l) {
        const auto& w = model.layers()[static_cast<std::size_t>(l)];
        const MatrixX<S> head = causal_attention(normalize_rows(x, cfg.norm), w);
        x = x + site_output({l, Slot::attn_out}, head, w.w_o);

        const MatrixX<S> hidden = activate(matmul_transposed(normalize_rows(x, cfg.norm), w.w_up), cfg.activation);
        x = x + site_output({l, Slot::mlp_down}, hidden, w.w_down);

        if constexpr (std::is_same_v<S, double>) {
            if (trace != nullptr) trace->residuals.push_back(x);
        }
    }

    const MatrixX<S> last = normalize_rows(MatrixX<S>(x.row(n - 1)), cfg.norm);
    VectorX<S> h(cfg.d_model);
    for (int k = 0; k < cfg.d_model; ++k) h(k) = S(model.final_gain()(k)) * last(0, k);
    return h;
}

void require_site_shape(const TransformerModel& model, const SiteId& site, const Matrix& m, std::size_t n,
                        const char* what) {
    model.require_site(site);
    if (m.rows() != static_cast<Eigen::Index>(n) || m.cols() != model.config().d_model) {
        throw DimensionError(std::string(what) + " for site " + to_string(site) + ": expected " +
                             std::to_string(n) + "x" + std::to_string(model.config().d_model) + ", got " +
                             shape_string(m));
    }
}

}  // namespace

ActivationTrace forward(const TransformerModel& model, std::span<const TokenId> tokens) {
    require_tokens(model, tokens);
    ActivationTrace trace;
    trace.tokens.assign(tokens.begin(), tokens.end());
    trace.h_final = run<double>(model, tokens, nullptr, &trace);
    trace.logits = matvec(model.unembedding(), trace.h_final);
    trace.model_fingerprint = model.fingerprint();
    return trace;
}

Vector propagate_from_site(const TransformerModel& model, const SiteId& site, const Matrix& site_outputs,
                           std::span<const TokenId> tokens) {
    require_tokens(model, tokens);
    require_site_shape(model, site, site_outputs, tokens.size(), "site outputs");
    const Substitution<double> sub{site, &site_outputs};
    return run<double>(model, tokens, &sub, nullptr);
}

Vector jvp_from_site(const TransformerModel& model, const ActivationTrace& base, const SiteId& site,
                     const Matrix& direction) {
    if (base.model_fingerprint != model.fingerprint()) {
        throw StaleTraceError("activation trace was not produced by this model");
    }
    require_site_shape(model, site, direction, base.tokens.size(), "direction");
    const DualMatrix seeded = make_dual(base.output_at(site), direction);
    const Substitution<Dual> sub{site, &seeded};
    return tangent_part(run<Dual>(model, base.tokens, &sub, nullptr));
}

Vector jvp_from_site(const TransformerModel& model, const SiteId& site, std::span<const TokenId> tokens,
                     const Matrix& direction) {
    return jvp_from_site(model, forward(model, tokens), site, direction);
}

double logit(const TransformerModel& model, const Vector& h, TokenId y) {
    require_token(model, y);
    if (h.size() != model.config().d_model) {
        throw DimensionError("logit: h has length " + std::to_string(h.size()) + ", expected " +
                             std::to_string(model.config().d_model));
    }
    return dot(model.unembedding().row(y), h);
}

}  // namespace lorashift
