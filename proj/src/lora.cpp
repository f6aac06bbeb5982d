#include "lorashift/lora.hpp"

#include <cmath>

#include "lorashift/model_io.hpp"
#include "lorashift/numfmt.hpp"

namespace lorashift {

void LoraAdapter::validate() const {
    if (rank < 1) throw DimensionError("adapter " + to_string(site) + ": rank must be >= 1");
    if (b.cols() != rank || a.rows() != rank) {
        throw DimensionError("adapter " + to_string(site) + ": B is " + shape_string(b) + ", A is " +
                             shape_string(a) + ", rank " + std::to_string(rank));
    }
}

void LoraAdapter::validate_against(const TransformerModel& model) const {
    validate();
    const Matrix& w = model.site_weight(site);
    if (b.rows() != w.rows() || a.cols() != w.cols()) {
        throw DimensionError("adapter " + to_string(site) + ": B·A would be " + std::to_string(b.rows()) + "x" +
                             std::to_string(a.cols()) + " but the site weight is " + shape_string(w));
    }
}

Matrix delta_w(const LoraAdapter& adapter) {
    adapter.validate();
    return scale(matmul(adapter.b, adapter.a), adapter.alpha / adapter.rank);
}

LoraAdapter pad_rank(const LoraAdapter& adapter, int new_rank) {
    adapter.validate();
    if (new_rank < adapter.rank) throw InputError("pad_rank: cannot shrink rank");
    LoraAdapter out = adapter;
    out.rank = new_rank;
    out.b = Matrix::Zero(adapter.b.rows(), new_rank);
    out.b.leftCols(adapter.rank) = adapter.b;
    out.a = Matrix::Zero(new_rank, adapter.a.cols());
    out.a.topRows(adapter.rank) = adapter.a;
    return out;
}

LoraAdapter random_lora(SeededRng& rng, const TransformerModel& model, const SiteId& site, int rank, double alpha,
                        double scale) {
    if (rank < 1) throw InputError("random_lora: rank must be >= 1");
    const Matrix& w = model.site_weight(site);
    LoraAdapter out;
    out.site = site;
    out.rank = rank;
    out.alpha = alpha;
    out.b = random_matrix(rng, w.rows(), rank, scale);
    out.a = random_matrix(rng, rank, w.cols(), scale);
    return out;
}

LoraSet::LoraSet(std::vector<LoraAdapter> adapters, double epsilon) : epsilon_(epsilon) {
    for (auto& a : adapters) insert(std::move(a));
}

void LoraSet::insert(LoraAdapter adapter) {
    adapter.validate();
    const SiteId site = adapter.site;
    if (!adapters_.emplace(site, std::move(adapter)).second) {
        throw SiteError("site " + to_string(site) + " already has an adapter");
    }
}

Matrix LoraSet::effective_delta(const SiteId& site) const {
    auto it = adapters_.find(site);
    if (it == adapters_.end()) throw SiteError("no adapter at site " + to_string(site));
    return scale(delta_w(it->second), epsilon_);
}

LoraSet scale(const LoraSet& set, double epsilon) {
    LoraSet out = set;
    out.epsilon_ = epsilon;
    return out;
}

TransformerModel apply(const TransformerModel& model, const LoraSet& set) {
    TransformerModel out = model;
    for (const auto& [site, adapter] : set.adapters()) {
        adapter.validate_against(model);
        out = out.with_site_weight(site, add(model.site_weight(site), set.effective_delta(site)));
    }
    return out;
}

double perturbation_norm(const LoraSet& set) {
    double sum_sq = 0.0;
    for (const auto& [site, adapter] : set.adapters()) {
        const Matrix d = delta_w(adapter);
        sum_sq += frobenius_inner(d, d);
    }
    return std::fabs(set.epsilon()) * std::sqrt(sum_sq);
}

std::string serialize_adapter(const LoraAdapter& adapter, double epsilon) {
    adapter.validate();
    const nlohmann::json doc = {{"format", "lorashift-adapter"},
                                {"version", kAdapterFormatVersion},
                                {"site", {{"layer", adapter.site.layer}, {"slot", to_string(adapter.site.slot)}}},
                                {"rank", adapter.rank},
                                {"alpha", format_hexfloat(adapter.alpha)},
                                {"epsilon", format_hexfloat(epsilon)},
                                {"b", matrix_to_json(adapter.b)},
                                {"a", matrix_to_json(adapter.a)}};
    return doc.dump(1) + "\n";
}

LoraAdapter parse_adapter(const std::string& text, double* epsilon) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("adapter file is not valid JSON: ") + e.what());
    }
    if (doc.value("format", "") != "lorashift-adapter") throw FormatError("not a lorashift adapter file");
    if (doc.value("version", 0) != kAdapterFormatVersion) throw FormatError("unsupported adapter format version");
    try {
        LoraAdapter out;
        out.site.layer = doc.at("site").at("layer").get<int>();
        out.site.slot = parse_slot(doc.at("site").at("slot").get<std::string>());
        out.rank = doc.at("rank").get<int>();
        out.alpha = parse_hexfloat(doc.at("alpha").get<std::string>());
        out.b = matrix_from_json(doc.at("b"), "b");
        out.a = matrix_from_json(doc.at("a"), "a");
        out.validate();
        if (epsilon != nullptr) *epsilon = parse_hexfloat(doc.at("epsilon").get<std::string>());
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("adapter file: ") + e.what());
    }
}

LoraAdapter load_adapter(const std::filesystem::path& path, double* epsilon) {
    return parse_adapter(read_text_file(path), epsilon);
}

}  // namespace lorashift
