#pragma once

// Experiment configuration: a single JSON document that fully determines a
// run. Example:
//
//   {
//     "model": {"n_layers": 4, "d_model": 32, "d_ff": 64, "vocab": 50,
//               "seq_capacity": 16, "activation": "gelu-tanh",
//               "norm": "rmsnorm", "init_scale": 1.0, "seed": 7},
//     "adapters": [{"layer": 2, "slot": "mlp_down", "rank": 2,
//                   "alpha": 1.0, "seed": 11, "scale": 0.3}],
//     "epsilon": 0.001,
//     "tokens": [3, 1, 4],
//     "y": [5],
//     "y_doc": 5, "y_pre": 9,
//     "eps_grid": [0.1, 0.03, 0.01, 0.003, 0.001, 0.0003],
//     "output_dir": "out",
//     "formats": ["json", "csv"]
//   }
//
// "model_file" may replace "model"; an adapter entry may be {"file": path}.
// Relative paths resolve against the config file's directory.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lorashift/lora.hpp"
#include "lorashift/model.hpp"

namespace lorashift {

struct AdapterSpec {
    SiteId site;
    int rank = 1;
    double alpha = 1.0;
    std::uint64_t seed = 0;
    double scale = 1.0;
    std::optional<std::filesystem::path> file;
};

struct ExperimentConfig {
    std::optional<ModelConfig> model;
    std::optional<std::filesystem::path> model_file;
    std::vector<AdapterSpec> adapters;
    double epsilon = 1.0;
    std::vector<TokenId> tokens;
    std::vector<TokenId> y;
    std::optional<TokenId> y_doc;
    std::optional<TokenId> y_pre;
    std::vector<double> eps_grid;
    std::filesystem::path output_dir = "out";
    bool want_json = true;
    bool want_csv = true;

    /// Normalized echo written into every report.
    nlohmann::json to_json() const;
};

/// Throws ConfigError naming the offending field path (e.g. "model.d_model").
ExperimentConfig parse_experiment_config(const std::string& text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// "json,csv" style list; throws ConfigError("formats", ...).
void set_formats(ExperimentConfig& config, const std::string& list);

TransformerModel materialize_model(const ExperimentConfig& config);
LoraSet materialize_adapters(const ExperimentConfig& config, const TransformerModel& model);

/// Checks every site, token id and length against the model's dimensions.
void validate_against(const ExperimentConfig& config, const TransformerModel& model);

}  // namespace lorashift
