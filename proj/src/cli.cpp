#include "lorashift/cli.hpp"

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

#include <CLI11.hpp>

#include "lorashift/analysis.hpp"
#include "lorashift/experiment.hpp"
#include "lorashift/model_io.hpp"
#include "lorashift/report.hpp"

namespace lorashift {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOptions {
    std::string config_path;
    std::string out_dir;
    std::string formats;
    std::optional<std::uint64_t> seed_override;
};

struct Run {
    ExperimentConfig config;
    TransformerModel model;
    LoraSet set;
};

/// Raised for failures after validation; carries the operation name.
struct ComputeFailure {
    std::string operation;
    std::string message;
};

void emit(std::ostream& out, const fs::path& path, const std::string& content) {
    write_file_atomic(path, content);
    out << path.lexically_normal().generic_string() << " sha256:" << sha256_hex(content) << "\n";
}

json adapter_notes(const LoraSet& set) {
    json notes = json::array();
    for (const auto& [site, a] : set.adapters()) {
        if (a.rank_deficient()) {
            notes.push_back("adapter " + to_string(site) + ": rank " + std::to_string(a.rank) +
                            " exceeds min(d_in, d_out); delta_w is rank-deficient");
        }
    }
    return notes;
}

Run prepare(const CommonOptions& opts) {
    ExperimentConfig config = load_experiment_config(opts.config_path);
    if (!opts.out_dir.empty()) config.output_dir = opts.out_dir;
    if (!opts.formats.empty()) set_formats(config, opts.formats);
    if (opts.seed_override) {
        if (!config.model) throw ConfigError("--seed-override", "cannot reseed a model loaded from model_file");
        config.model->seed = *opts.seed_override;
    }
    TransformerModel model = materialize_model(config);
    validate_against(config, model);
    LoraSet set = materialize_adapters(config, model);
    return Run{std::move(config), std::move(model), std::move(set)};
}

template <typename F>
auto computing(const char* operation, F&& f) {
    try {
        return f();
    } catch (const Error& e) {
        throw ComputeFailure{operation, e.what()};
    }
}

void cmd_gen_model(const Run& run, std::ostream& out) {
    const std::string text = computing("serialize_model", [&] { return serialize_model(run.model); });
    emit(out, run.config.output_dir / "model.json", text);
}

void cmd_gen_lora(const Run& run, std::ostream& out) {
    for (const auto& [site, adapter] : run.set.adapters()) {
        const std::string text =
            computing("serialize_adapter", [&] { return serialize_adapter(adapter, run.set.epsilon()); });
        emit(out, run.config.output_dir / ("adapter_" + to_string(site) + ".json"), text);
    }
}

void cmd_analyze(const Run& run, std::ostream& out) {
    if (run.config.y.empty()) throw ConfigError("y", "analyze needs at least one token");
    std::vector<ShiftReport> reports;
    for (TokenId y : run.config.y) {
        reports.push_back(computing("logit_remainder", [&] { return logit_remainder(run.model, run.set, run.config.tokens, y); }));
    }
    if (run.config.want_json) {
        json items = json::array();
        for (const auto& r : reports) items.push_back(to_json(r));
        const json results = {{"reports", std::move(items)}, {"notes", adapter_notes(run.set)}};
        emit(out, run.config.output_dir / "analyze.json", render_json(make_report("analyze", run.config.to_json(), results)));
    }
    if (run.config.want_csv) emit(out, run.config.output_dir / "analyze.csv", shift_csv(reports));
}

void cmd_margin(const Run& run, std::ostream& out) {
    if (!run.config.y_doc) throw ConfigError("y_doc", "missing required field");
    if (!run.config.y_pre) throw ConfigError("y_pre", "missing required field");
    if (*run.config.y_doc == *run.config.y_pre) throw ConfigError("y_pre", "must differ from y_doc");
    const MarginReport report = computing("margin_report", [&] {
        return margin_report(run.model, run.set, run.config.tokens, *run.config.y_doc, *run.config.y_pre);
    });
    if (run.config.want_json) {
        const json results = {{"margin", to_json(report)}, {"notes", adapter_notes(run.set)}};
        emit(out, run.config.output_dir / "margin.json", render_json(make_report("margin", run.config.to_json(), results)));
    }
    if (run.config.want_csv) emit(out, run.config.output_dir / "margin.csv", margin_csv(report));
}

void cmd_sweep(const Run& run, std::ostream& out) {
    if (run.config.y.size() != 1) throw ConfigError("y", "sweep needs exactly one token");
    try {
        validate_eps_grid(run.config.eps_grid);
    } catch (const InputError& e) {
        throw ConfigError("eps_grid", e.what());
    }
    const SweepResult sweep = computing("remainder_sweep", [&] {
        return remainder_sweep(run.model, run.set, run.config.tokens, run.config.y.front(), run.config.eps_grid);
    });
    if (run.config.want_json) {
        json results = to_json(sweep);
        results["token"] = run.config.y.front();
        results["notes"] = adapter_notes(run.set);
        emit(out, run.config.output_dir / "sweep.json", render_json(make_report("sweep", run.config.to_json(), results)));
    }
    if (run.config.want_csv) emit(out, run.config.output_dir / "sweep.csv", sweep_csv(sweep));
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"First-order LoRA logit-shift analysis on a seeded toy transformer", "lora-shift"};
    app.require_subcommand(1);
    CommonOptions opts;

    using Command = void (*)(const Run&, std::ostream&);
    const std::pair<const char*, const char*> names[] = {
        {"gen-model", "Build the model from the config and write model.json"},
        {"gen-lora", "Generate the configured adapters and write one file per site"},
        {"analyze", "Exact shift, first-order terms and remainder per token"},
        {"margin", "Fact-margin decomposition and flip diagnostics"},
        {"sweep", "Remainder scaling over an epsilon grid"}};
    const Command commands[] = {cmd_gen_model, cmd_gen_lora, cmd_analyze, cmd_margin, cmd_sweep};

    std::vector<CLI::App*> subs;
    for (const auto& [name, help] : names) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", opts.config_path, "Experiment config (JSON)")->required();
        sub->add_option("--out", opts.out_dir, "Output directory (overrides output_dir)");
        sub->add_option("--format", opts.formats, "Comma-separated subset of json,csv");
        sub->add_option("--seed-override", opts.seed_override, "Replace model.seed");
        subs.push_back(sub);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    std::size_t which = 0;
    while (which < subs.size() && !subs[which]->parsed()) ++which;
    const char* command = names[which].first;

    try {
        const Run run = prepare(opts);
        commands[which](run, out);
        return kExitOk;
    } catch (const ConfigError& e) {
        err << "lora-shift " << command << ": config error in " << e.what() << "\n";
        return kExitConfig;
    } catch (const ComputeFailure& f) {
        err << "lora-shift " << command << ": computation failed in " << f.operation << ": " << f.message << "\n";
        return kExitCompute;
    } catch (const Error& e) {
        // Raised while validating inputs (unreadable files, bad adapter shapes, ...).
        err << "lora-shift " << command << ": invalid input: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "lora-shift " << command << ": " << e.what() << "\n";
        return kExitCompute;
    }
}

}  // namespace lorashift
