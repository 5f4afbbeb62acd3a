#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace deepc::io {

/// Writes through a sibling temp file and renames it into place.
void write_file_atomically(const std::filesystem::path& path, std::string_view content);

[[nodiscard]] std::string read_file(const std::filesystem::path& path);

/// Round-trippable decimal formatting.
[[nodiscard]] std::string format_double(double value);

/// Minimal CSV reader for numeric tables with a header row.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  [[nodiscard]] std::size_t column(std::string_view name) const;
};

[[nodiscard]] CsvTable read_csv(const std::filesystem::path& path);

[[nodiscard]] std::vector<std::string> split_csv_line(std::string_view line);

}  // namespace deepc::io
