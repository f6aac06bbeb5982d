#include "lorashift/report.hpp"

#include <sstream>

#include "lorashift/numfmt.hpp"
#include "lorashift/rng.hpp"

#ifndef LORASHIFT_VERSION
#define LORASHIFT_VERSION "0.0.0"
#endif

namespace lorashift {

using nlohmann::json;

std::string_view tool_version() { return LORASHIFT_VERSION; }

std::string schema_version() { return std::to_string(kSchemaMajor) + "." + std::to_string(kSchemaMinor); }

namespace {

json site_rows(const std::map<SiteId, double>& values, const char* key) {
    json rows = json::array();
    for (const auto& [site, v] : values) {
        rows.push_back({{"site", to_string(site)}, {"layer", site.layer}, {"slot", to_string(site.slot)}, {key, v}});
    }
    return rows;
}

}  // namespace

json to_json(const ShiftReport& r) {
    return {{"token", r.token},
            {"exact_shift", r.exact_shift},
            {"first_order_total", r.first_order_total},
            {"per_site", site_rows(r.per_site, "first_order")},
            {"remainder", r.remainder},
            {"delta_norm", r.delta_norm}};
}

json to_json(const FlipDiagnostic& d) {
    return {{"lhs_first_order", d.lhs},
            {"rhs_neg_m0_minus_remainder", d.rhs},
            {"inequality_holds", d.inequality_holds},
            {"flip_actual", d.flip_actual},
            {"identity_consistent", d.identity_consistent},
            {"first_order_prediction", d.first_order_prediction},
            {"prediction_correct", d.prediction_correct}};
}

json to_json(const MarginReport& r) {
    return {{"y_doc", r.y_doc},
            {"y_pre", r.y_pre},
            {"m0", r.m0},
            {"m", r.m},
            {"first_order_margin", r.first_order_margin},
            {"per_site_margin", site_rows(r.per_site_margin, "first_order_margin")},
            {"margin_remainder", r.margin_remainder},
            {"flip_predicted", r.flip_predicted},
            {"flip_actual", r.flip_actual},
            {"flip_criterion", to_json(flip_criterion(r))}};
}

json to_json(const SweepResult& s) {
    json rows = json::array();
    for (const auto& row : s.rows) {
        rows.push_back({{"epsilon", row.epsilon},
                        {"exact_shift", row.exact_shift},
                        {"first_order", row.first_order},
                        {"remainder", row.remainder},
                        {"remainder_over_eps", row.remainder_over_eps},
                        {"remainder_over_eps_sq", row.remainder_over_eps_sq}});
    }
    json out = {{"eps_grid", s.eps_grid},
                {"rows", std::move(rows)},
                {"linear_exact", s.linear_exact},
                {"rows_used_in_fit", s.rows_used},
                {"remainder_floor", kRemainderFloor}};
    out["fitted_slope"] = s.fitted_slope ? json(*s.fitted_slope) : json(nullptr);
    return out;
}

json make_report(std::string_view command, const json& config_echo, json results) {
    return {{"schema_version", schema_version()},
            {"tool_version", tool_version()},
            {"rng_algorithm", SeededRng::algorithm_id},
            {"command", command},
            {"config", config_echo},
            {"results", std::move(results)}};
}

std::string render_json(const json& doc) { return doc.dump(2) + "\n"; }

json parse_report(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("report is not valid JSON: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("schema_version") || !doc.at("schema_version").is_string()) {
        throw FormatError("report has no schema_version");
    }
    const std::string v = doc.at("schema_version").get<std::string>();
    const auto dot_pos = v.find('.');
    int major = -1;
    try {
        major = std::stoi(v.substr(0, dot_pos));
    } catch (const std::exception&) {
        throw FormatError("malformed schema_version '" + v + "'");
    }
    if (major != kSchemaMajor) throw FormatError("unsupported report schema major " + std::to_string(major));
    return doc;
}

std::string shift_csv(const std::vector<ShiftReport>& reports) {
    std::ostringstream out;
    out << "token,site,layer,slot,first_order\n";
    for (const auto& r : reports) {
        for (const auto& [site, v] : r.per_site) {
            out << r.token << ',' << to_string(site) << ',' << site.layer << ',' << to_string(site.slot) << ','
                << format_shortest(v) << '\n';
        }
    }
    return out.str();
}

std::string margin_csv(const MarginReport& report) {
    std::ostringstream out;
    out << "site,layer,slot,first_order_margin\n";
    for (const auto& [site, v] : report.per_site_margin) {
        out << to_string(site) << ',' << site.layer << ',' << to_string(site.slot) << ',' << format_shortest(v)
            << '\n';
    }
    return out.str();
}

std::string sweep_csv(const SweepResult& sweep) {
    std::ostringstream out;
    out << "epsilon,exact_shift,first_order,remainder,remainder_over_eps,remainder_over_eps_sq\n";
    for (const auto& row : sweep.rows) {
        out << format_shortest(row.epsilon) << ',' << format_shortest(row.exact_shift) << ','
            << format_shortest(row.first_order) << ',' << format_shortest(row.remainder) << ','
            << format_shortest(row.remainder_over_eps) << ',' << format_shortest(row.remainder_over_eps_sq) << '\n';
    }
    return out.str();
}

}  // namespace lorashift
