#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

namespace kam::cli {

inline constexpr const char* kManifestSchema = "kam-manifest/1";

/// Writes to `path` through a sibling temporary file and a rename, so readers
/// never observe a partial file.
void write_atomic(const std::filesystem::path& path, const std::string& content);

/// %.17g, or "nan"/"inf" spelled out; identical bits give identical text.
std::string format_double(double x);

/// Minimal CSV builder; fields are never quoted, so callers pass plain tokens.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);
  void add_row(std::vector<std::string> fields);
  std::string str() const;
  std::size_t rows() const { return rows_.size(); }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// Pretty JSON with a trailing newline.
std::string dump_json(const nlohmann::json& j);

/// {"schema", "timestamp", "generator"}; the timestamp is the only field that
/// differs between two runs of the same configuration.
nlohmann::json manifest_header();

}  // namespace kam::cli
