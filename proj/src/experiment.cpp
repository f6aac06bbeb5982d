#include "lorashift/experiment.hpp"

#include <algorithm>
#include <cmath>

#include "lorashift/model_io.hpp"

namespace lorashift {

using nlohmann::json;

namespace {

std::string at_index(const std::string& field, std::size_t i) { return field + "[" + std::to_string(i) + "]"; }

int as_int(const json& v, const std::string& field) {
    if (!v.is_number_integer()) throw ConfigError(field, "expected an integer");
    return v.get<int>();
}

std::uint64_t as_u64(const json& v, const std::string& field) {
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<long long>() < 0)) {
        throw ConfigError(field, "expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
}

double as_number(const json& v, const std::string& field) {
    if (!v.is_number()) throw ConfigError(field, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError(field, "must be finite");
    return d;
}

std::string as_string(const json& v, const std::string& field) {
    if (!v.is_string()) throw ConfigError(field, "expected a string");
    return v.get<std::string>();
}

std::vector<TokenId> as_token_list(const json& v, const std::string& field) {
    std::vector<TokenId> out;
    if (v.is_number_integer()) {
        out.push_back(as_int(v, field));
        return out;
    }
    if (!v.is_array()) throw ConfigError(field, "expected an integer or an array of integers");
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_int(v[i], at_index(field, i)));
    return out;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_relative() && !base.empty() ? base / path : path;
}

AdapterSpec parse_adapter_spec(const json& j, const std::string& field, const std::filesystem::path& base_dir) {
    if (!j.is_object()) throw ConfigError(field, "expected an object");
    AdapterSpec a;
    if (j.contains("file")) {
        a.file = resolve(base_dir, as_string(j.at("file"), field + ".file"));
        return a;
    }
    auto need = [&](const char* key) -> const json& {
        if (!j.contains(key)) throw ConfigError(field + "." + key, "missing required field");
        return j.at(key);
    };
    a.site.layer = as_int(need("layer"), field + ".layer");
    try {
        a.site.slot = parse_slot(as_string(need("slot"), field + ".slot"));
    } catch (const SiteError& e) {
        throw ConfigError(field + ".slot", e.what());
    }
    a.rank = as_int(need("rank"), field + ".rank");
    if (a.rank < 1) throw ConfigError(field + ".rank", "must be >= 1");
    a.alpha = as_number(need("alpha"), field + ".alpha");
    a.seed = as_u64(need("seed"), field + ".seed");
    a.scale = as_number(need("scale"), field + ".scale");
    if (!(a.scale > 0.0)) throw ConfigError(field + ".scale", "must be positive");
    return a;
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& text, const std::filesystem::path& base_dir) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError("<config>", std::string("not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("<config>", "expected a JSON object");

    static const char* const kKnown[] = {"model", "model_file", "adapters", "epsilon", "tokens", "y",
                                         "y_doc", "y_pre", "eps_grid", "output_dir", "formats"};
    for (const auto& [key, _] : j.items()) {
        if (std::find(std::begin(kKnown), std::end(kKnown), key) == std::end(kKnown)) {
            throw ConfigError(key, "unknown field");
        }
    }

    ExperimentConfig c;
    if (j.contains("model_file")) c.model_file = resolve(base_dir, as_string(j.at("model_file"), "model_file"));
    if (j.contains("model")) {
        c.model = model_config_from_json(j.at("model"), "model.");
    } else if (!c.model_file) {
        throw ConfigError("model", "missing required field (or give model_file)");
    }

    if (j.contains("adapters")) {
        const json& arr = j.at("adapters");
        if (!arr.is_array()) throw ConfigError("adapters", "expected an array");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            c.adapters.push_back(parse_adapter_spec(arr[i], at_index("adapters", i), base_dir));
        }
    }
    if (j.contains("epsilon")) c.epsilon = as_number(j.at("epsilon"), "epsilon");
    if (!j.contains("tokens")) throw ConfigError("tokens", "missing required field");
    c.tokens = as_token_list(j.at("tokens"), "tokens");
    if (c.tokens.empty()) throw ConfigError("tokens", "must not be empty");
    if (j.contains("y")) c.y = as_token_list(j.at("y"), "y");
    if (j.contains("y_doc")) c.y_doc = as_int(j.at("y_doc"), "y_doc");
    if (j.contains("y_pre")) c.y_pre = as_int(j.at("y_pre"), "y_pre");
    if (j.contains("eps_grid")) {
        const json& arr = j.at("eps_grid");
        if (!arr.is_array()) throw ConfigError("eps_grid", "expected an array");
        for (std::size_t i = 0; i < arr.size(); ++i) c.eps_grid.push_back(as_number(arr[i], at_index("eps_grid", i)));
    }
    if (j.contains("output_dir")) c.output_dir = resolve(base_dir, as_string(j.at("output_dir"), "output_dir"));
    if (j.contains("formats")) {
        const json& arr = j.at("formats");
        if (!arr.is_array()) throw ConfigError("formats", "expected an array");
        std::string list;
        for (std::size_t i = 0; i < arr.size(); ++i) {
            list += (i ? "," : "") + as_string(arr[i], at_index("formats", i));
        }
        set_formats(c, list);
    }
    return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_text_file(path);
    } catch (const InputError& e) {
        throw ConfigError("<config>", e.what());
    }
    return parse_experiment_config(text, path.parent_path());
}

void set_formats(ExperimentConfig& config, const std::string& list) {
    config.want_json = false;
    config.want_csv = false;
    std::size_t start = 0;
    while (start <= list.size()) {
        const std::size_t comma = std::min(list.find(',', start), list.size());
        const std::string item = list.substr(start, comma - start);
        if (item == "json") {
            config.want_json = true;
        } else if (item == "csv") {
            config.want_csv = true;
        } else {
            throw ConfigError("formats", "unknown format '" + item + "' (expected json or csv)");
        }
        start = comma + 1;
    }
}

json ExperimentConfig::to_json() const {
    json adapters_json = json::array();
    for (const auto& a : adapters) {
        if (a.file) {
            adapters_json.push_back({{"file", a.file->generic_string()}});
        } else {
            adapters_json.push_back({{"layer", a.site.layer},
                                     {"slot", lorashift::to_string(a.site.slot)},
                                     {"rank", a.rank},
                                     {"alpha", a.alpha},
                                     {"seed", a.seed},
                                     {"scale", a.scale}});
        }
    }
    json formats = json::array();
    if (want_json) formats.push_back("json");
    if (want_csv) formats.push_back("csv");
    json out = {{"adapters", std::move(adapters_json)},
                {"epsilon", epsilon},
                {"tokens", tokens},
                {"y", y},
                {"eps_grid", eps_grid},
                {"formats", std::move(formats)}};
    if (model) out["model"] = model_config_to_json(*model);
    if (model_file) out["model_file"] = model_file->generic_string();
    if (y_doc) out["y_doc"] = *y_doc;
    if (y_pre) out["y_pre"] = *y_pre;
    return out;
}

TransformerModel materialize_model(const ExperimentConfig& config) {
    if (config.model_file) {
        TransformerModel m = load_model(*config.model_file);
        if (config.model && !(*config.model == m.config())) {
            throw ConfigError("model", "does not match the configuration stored in model_file");
        }
        return m;
    }
    return build_model(*config.model);
}

LoraSet materialize_adapters(const ExperimentConfig& config, const TransformerModel& model) {
    LoraSet set({}, config.epsilon);
    for (const auto& spec : config.adapters) {
        if (spec.file) {
            set.insert(load_adapter(*spec.file));
        } else {
            SeededRng rng(spec.seed);
            set.insert(random_lora(rng, model, spec.site, spec.rank, spec.alpha, spec.scale));
        }
    }
    for (const auto& [site, adapter] : set.adapters()) adapter.validate_against(model);
    return set;
}

void validate_against(const ExperimentConfig& config, const TransformerModel& model) {
    const auto& mc = model.config();
    for (std::size_t i = 0; i < config.adapters.size(); ++i) {
        const auto& a = config.adapters[i];
        if (a.file) continue;
        if (a.site.layer < 0 || a.site.layer >= mc.n_layers) {
            throw ConfigError(at_index("adapters", i) + ".layer",
                              "must be in [0, " + std::to_string(mc.n_layers) + ")");
        }
    }
    if (static_cast<int>(config.tokens.size()) > mc.seq_capacity) {
        throw ConfigError("tokens", "length exceeds seq_capacity " + std::to_string(mc.seq_capacity));
    }
    auto check_id = [&](TokenId t, const std::string& field) {
        if (t < 0 || t >= mc.vocab) throw ConfigError(field, "token id outside [0, " + std::to_string(mc.vocab) + ")");
    };
    for (std::size_t i = 0; i < config.tokens.size(); ++i) check_id(config.tokens[i], at_index("tokens", i));
    for (std::size_t i = 0; i < config.y.size(); ++i) check_id(config.y[i], at_index("y", i));
    if (config.y_doc) check_id(*config.y_doc, "y_doc");
    if (config.y_pre) check_id(*config.y_pre, "y_pre");
}

}  // namespace lorashift
