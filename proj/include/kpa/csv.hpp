#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kpa {

/// RFC 4180 table: quoted fields may contain commas, quotes ("") and newlines.
struct CsvTable {
  std::string source;  // file name used in error messages
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> row_lines;  // 1-based line on which each row starts

  std::optional<std::size_t> column(std::string_view name) const;
  /// Row label for error messages, e.g. "labels.csv:17".
  std::string where(std::size_t row) const;
};

CsvTable parse_csv(std::string_view text, std::string source = "<memory>");
CsvTable read_csv(const std::filesystem::path& path);

std::string csv_escape(std::string_view field);
std::string csv_line(std::span<const std::string> fields);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view content);

}  // namespace kpa
