#pragma once

// Small file helpers shared by every module: hashing, JSON-lines I/O and
// whole-file reads/writes.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace dualsys {

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);

std::string read_file(const std::filesystem::path& path);

/// Writes the whole file, creating parent directories.
void write_file(const std::filesystem::path& path, std::string_view contents);

/// One parsed JSON-lines record and its 1-based line number.
struct JsonLine {
  std::size_t line = 0;
  nlohmann::json value;
};

/// Blank lines are skipped; a malformed line throws ValidationError naming it.
std::vector<JsonLine> read_jsonl(const std::filesystem::path& path);

/// Like read_jsonl, but malformed lines are returned as null values with
/// their parse error in `errors` instead of throwing.
std::vector<JsonLine> read_jsonl_lenient(const std::filesystem::path& path,
                                         std::vector<std::pair<std::size_t, std::string>>& errors);

std::string to_jsonl(const std::vector<nlohmann::json>& rows);

/// Quotes a CSV field when it contains a comma, quote or line break.
std::string csv_field(std::string_view s);

}  // namespace dualsys
