#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace poolnet {

inline constexpr int kSchemaVersion = 1;

/// Writes to a sibling temp file, then renames over `file`.
void write_text_atomic(const std::filesystem::path &file, std::string_view text);

/// Pretty-printed JSON with a top-level schema_version field.
void write_json_report(const std::filesystem::path &file, nlohmann::json report);

/// Header row plus numeric rows, preceded by a "# schema_version: N" line.
void write_csv(const std::filesystem::path &file, const std::vector<std::string> &header,
               const std::vector<std::vector<double>> &rows);

} // namespace poolnet
