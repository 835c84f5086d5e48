#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace panelsvd {

/// Comma-separated table with a "#schema=<id>" first line and a header row.
/// Fields are quoted per RFC 4180 only when they contain ',', '"', '\r' or '\n'.
struct CsvTable {
  std::string schema;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  [[nodiscard]] std::size_t column(std::string_view name) const;  // throws ValidationError when absent
  [[nodiscard]] double number(std::size_t row, std::string_view name) const;
  [[nodiscard]] const std::string& text(std::size_t row, std::string_view name) const;
};

[[nodiscard]] std::string csv_escape(std::string_view field);
[[nodiscard]] std::string csv_line(const std::vector<std::string>& fields);
[[nodiscard]] std::string schema_line(std::string_view schema);

[[nodiscard]] CsvTable parse_csv(std::string_view text);
[[nodiscard]] CsvTable read_csv(const std::string& path);
[[nodiscard]] std::string to_csv(const CsvTable& table);

}  // namespace panelsvd
