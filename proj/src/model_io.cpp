#include "lorashift/model_io.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>

#include "lorashift/numfmt.hpp"

namespace lorashift {

using nlohmann::json;

std::string format_hexfloat(double v) {
    std::array<char, 64> buf{};
    const bool negative = std::signbit(v);
    const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), std::fabs(v), std::chars_format::hex);
    if (ec != std::errc{}) throw FormatError("cannot format value as hex float");
    return std::string(negative ? "-0x" : "0x") + std::string(buf.data(), end);
}

double parse_hexfloat(std::string_view s) {
    bool negative = false;
    if (!s.empty() && s.front() == '-') {
        negative = true;
        s.remove_prefix(1);
    }
    if (s.size() < 3 || s[0] != '0' || (s[1] != 'x' && s[1] != 'X')) {
        throw FormatError("expected hex float, got '" + std::string(s) + "'");
    }
    s.remove_prefix(2);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, std::chars_format::hex);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw FormatError("malformed hex float '0x" + std::string(s) + "'");
    }
    return negative ? -v : v;
}

std::string format_shortest(double v) {
    std::array<char, 64> buf{};
    const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    if (ec != std::errc{}) throw FormatError("cannot format value");
    return std::string(buf.data(), end);
}

json matrix_to_json(const Matrix& m) {
    json data = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(format_hexfloat(m(i, j)));
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Matrix matrix_from_json(const json& j, const std::string& name) {
    try {
        const auto rows = j.at("rows").get<Eigen::Index>();
        const auto cols = j.at("cols").get<Eigen::Index>();
        const auto& data = j.at("data");
        if (rows < 1 || cols < 1 || !data.is_array() || data.size() != static_cast<std::size_t>(rows * cols)) {
            throw FormatError(name + ": data length does not match rows*cols");
        }
        Matrix m(rows, cols);
        std::size_t idx = 0;
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = parse_hexfloat(data[idx++].get<std::string>());
        return m;
    } catch (const json::exception& e) {
        throw FormatError(name + ": " + e.what());
    }
}

json model_config_to_json(const ModelConfig& c) {
    return {{"n_layers", c.n_layers},
            {"d_model", c.d_model},
            {"d_ff", c.d_ff},
            {"vocab", c.vocab},
            {"seq_capacity", c.seq_capacity},
            {"activation", to_string(c.activation)},
            {"norm", to_string(c.norm)},
            {"init_scale", c.init_scale},
            {"seed", c.seed}};
}

namespace {

template <typename T>
T required(const json& j, const std::string& key, const std::string& prefix) {
    const std::string field = prefix + key;
    if (!j.is_object() || !j.contains(key)) throw ConfigError(field, "missing required field");
    const json& v = j.at(key);
    if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError(field, "expected a string");
    } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError(field, "expected an integer");
        if constexpr (std::is_unsigned_v<T>) {
            if (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0) {
                throw ConfigError(field, "expected a non-negative integer");
            }
        }
    } else {
        if (!v.is_number()) throw ConfigError(field, "expected a number");
    }
    return v.get<T>();
}

}  // namespace

ModelConfig model_config_from_json(const json& j, const std::string& prefix) {
    if (!j.is_object()) throw ConfigError(prefix.empty() ? "model" : prefix.substr(0, prefix.size() - 1), "expected an object");
    ModelConfig c;
    c.n_layers = required<int>(j, "n_layers", prefix);
    c.d_model = required<int>(j, "d_model", prefix);
    c.d_ff = required<int>(j, "d_ff", prefix);
    c.vocab = required<int>(j, "vocab", prefix);
    c.seq_capacity = required<int>(j, "seq_capacity", prefix);
    try {
        c.activation = parse_activation(required<std::string>(j, "activation", prefix));
        c.norm = parse_norm(required<std::string>(j, "norm", prefix));
    } catch (const ConfigError& e) {
        if (e.field().starts_with(prefix)) throw;
        throw ConfigError(prefix + e.field(), e.what());
    }
    c.init_scale = required<double>(j, "init_scale", prefix);
    c.seed = required<std::uint64_t>(j, "seed", prefix);
    try {
        c.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(prefix + e.field(), e.what());
    }
    return c;
}

std::string serialize_model(const TransformerModel& model) {
    json layers = json::array();
    for (const auto& w : model.layers()) {
        layers.push_back({{"w_q", matrix_to_json(w.w_q)},
                          {"w_k", matrix_to_json(w.w_k)},
                          {"w_v", matrix_to_json(w.w_v)},
                          {"w_o", matrix_to_json(w.w_o)},
                          {"w_up", matrix_to_json(w.w_up)},
                          {"w_down", matrix_to_json(w.w_down)}});
    }
    const Matrix gain = model.final_gain().transpose();
    json doc = {{"format", "lorashift-model"},
                {"version", kModelFormatVersion},
                {"config", model_config_to_json(model.config())},
                {"embedding", matrix_to_json(model.embedding())},
                {"layers", std::move(layers)},
                {"final_gain", matrix_to_json(gain)},
                {"unembedding", matrix_to_json(model.unembedding())}};
    return doc.dump(1) + "\n";
}

TransformerModel parse_model(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("model file is not valid JSON: ") + e.what());
    }
    if (doc.value("format", "") != "lorashift-model") throw FormatError("not a lorashift model file");
    if (doc.value("version", 0) != kModelFormatVersion) {
        throw FormatError("unsupported model format version " + doc.value("version", json()).dump());
    }
    const ModelConfig config = model_config_from_json(doc.at("config"), "config.");
    std::vector<LayerWeights> layers;
    for (const auto& lj : doc.at("layers")) {
        LayerWeights w;
        w.w_q = matrix_from_json(lj.at("w_q"), "w_q");
        w.w_k = matrix_from_json(lj.at("w_k"), "w_k");
        w.w_v = matrix_from_json(lj.at("w_v"), "w_v");
        w.w_o = matrix_from_json(lj.at("w_o"), "w_o");
        w.w_up = matrix_from_json(lj.at("w_up"), "w_up");
        w.w_down = matrix_from_json(lj.at("w_down"), "w_down");
        layers.push_back(std::move(w));
    }
    const Matrix gain = matrix_from_json(doc.at("final_gain"), "final_gain");
    if (gain.rows() != 1) throw FormatError("final_gain must be a single row");
    return TransformerModel(config, matrix_from_json(doc.at("embedding"), "embedding"), std::move(layers),
                            gain.row(0).transpose(), matrix_from_json(doc.at("unembedding"), "unembedding"));
}

void save_model(const TransformerModel& model, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_model(model));
}

TransformerModel load_model(const std::filesystem::path& path) { return parse_model(read_text_file(path)); }

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw InputError("cannot write " + tmp.string());
        out << content;
        if (!out.flush()) throw InputError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string sha256_hex(const std::string& content) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (EVP_Digest(content.data(), content.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw Error("sha256 failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[digest[i] >> 4]);
        out.push_back(kHex[digest[i] & 0xf]);
    }
    return out;
}

}  // namespace lorashift
