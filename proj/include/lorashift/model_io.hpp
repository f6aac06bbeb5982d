#pragma once

// Model and matrix serialization. Files are JSON documents; every weight is
// a hexadecimal float string so values survive the round trip exactly.

#include <filesystem>
#include <string>

#include <json.hpp>

#include "lorashift/model.hpp"

namespace lorashift {

inline constexpr int kModelFormatVersion = 1;

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j, const std::string& name);

nlohmann::json model_config_to_json(const ModelConfig& c);
/// Missing or mistyped keys raise ConfigError naming `prefix + key`.
ModelConfig model_config_from_json(const nlohmann::json& j, const std::string& prefix = "model.");

std::string serialize_model(const TransformerModel& model);
TransformerModel parse_model(const std::string& text);

void save_model(const TransformerModel& model, const std::filesystem::path& path);
TransformerModel load_model(const std::filesystem::path& path);

/// Reads a whole file; throws InputError if it cannot be opened.
std::string read_text_file(const std::filesystem::path& path);
/// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

/// Lowercase hex SHA-256 of `content`.
std::string sha256_hex(const std::string& content);

}  // namespace lorashift
