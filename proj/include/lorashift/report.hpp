#pragma once

// Report files. JSON documents carry a schema version, the tool version, the
// RNG algorithm id and a full echo of the experiment config; CSV tables use
// shortest round-trip decimals.

#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lorashift/analysis.hpp"

namespace lorashift {

inline constexpr int kSchemaMajor = 1;
inline constexpr int kSchemaMinor = 0;

std::string_view tool_version();
std::string schema_version();

nlohmann::json to_json(const ShiftReport& r);
nlohmann::json to_json(const MarginReport& r);
nlohmann::json to_json(const FlipDiagnostic& d);
nlohmann::json to_json(const SweepResult& s);

/// Envelope around a results payload.
nlohmann::json make_report(std::string_view command, const nlohmann::json& config_echo, nlohmann::json results);

/// Pretty JSON with a trailing newline.
std::string render_json(const nlohmann::json& doc);

/// Parses a report and rejects unknown schema majors (FormatError).
nlohmann::json parse_report(const std::string& text);

/// token, site, layer, slot, first_order: one row per (token, site).
std::string shift_csv(const std::vector<ShiftReport>& reports);
/// site, layer, slot, first_order_margin: one row per site.
std::string margin_csv(const MarginReport& report);
/// epsilon, exact_shift, first_order, remainder, remainder_over_eps, remainder_over_eps_sq
std::string sweep_csv(const SweepResult& sweep);

}  // namespace lorashift
