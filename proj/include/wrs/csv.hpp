#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace wrs {

// RFC-4180 field quoting (only when needed).
std::string csv_escape(std::string_view field);
std::string csv_line(const std::vector<std::string>& fields);

// Shortest decimal form that reads back to the same double; empty for NaN.
std::string format_double(double value);
// Inverse of format_double: empty fields read as NaN.
double parse_double(std::string_view text);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Throws FormatError when the column is absent.
  std::size_t column(std::string_view name) const;
  bool has_column(std::string_view name) const;
};

// A trailing line without its newline is an interrupted write and is dropped.
CsvTable read_csv(const std::filesystem::path& path);

}  // namespace wrs
