#include "panelsvd/csv.hpp"

#include <fstream>
#include <sstream>

#include "panelsvd/errors.hpp"
#include "panelsvd/io.hpp"

namespace panelsvd {

namespace {

constexpr std::string_view kSchemaPrefix = "#schema=";

// Splits one record starting at `pos`; advances `pos` past the terminating newline.
std::vector<std::string> parse_record(std::string_view text, std::size_t& pos) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  bool was_quoted = false;
  while (pos < text.size()) {
    const char c = text[pos++];
    if (quoted) {
      if (c == '"') {
        if (pos < text.size() && text[pos] == '"') {
          field += '"';
          ++pos;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      if (!field.empty() || was_quoted) throw ValidationError("stray quote inside a csv field");
      quoted = was_quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
      was_quoted = false;
    } else if (c == '\n') {
      fields.push_back(std::move(field));
      return fields;
    } else {
      if (was_quoted) throw ValidationError("text after closing quote in a csv field");
      field += c;
    }
  }
  if (quoted) throw ValidationError("unterminated quoted csv field");
  throw ValidationError("csv record is missing its trailing newline");
}

}  // namespace

std::size_t CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == name) return i;
  throw ValidationError("csv has no column '" + std::string(name) + "'");
}

double CsvTable::number(std::size_t row, std::string_view name) const {
  return parse_number(text(row, name));
}

const std::string& CsvTable::text(std::size_t row, std::string_view name) const {
  require(row < rows.size(), "csv row index out of range");
  return rows[row][column(name)];
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string csv_line(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) out += ',';
    out += csv_escape(fields[i]);
  }
  out += '\n';
  return out;
}

std::string schema_line(std::string_view schema) { return std::string(kSchemaPrefix) + std::string(schema) + "\n"; }

CsvTable parse_csv(std::string_view text) {
  CsvTable table;
  std::size_t pos = 0;
  const std::size_t eol = text.find('\n');
  if (text.substr(0, kSchemaPrefix.size()) != kSchemaPrefix || eol == std::string_view::npos)
    throw ValidationError("csv must start with a '#schema=' line");
  table.schema = std::string(text.substr(kSchemaPrefix.size(), eol - kSchemaPrefix.size()));
  pos = eol + 1;
  if (pos >= text.size()) throw ValidationError("csv has no header row");
  table.columns = parse_record(text, pos);
  while (pos < text.size()) {
    auto row = parse_record(text, pos);
    if (row.size() != table.columns.size())
      throw ValidationError("csv row " + std::to_string(table.rows.size() + 1) + " has " +
                            std::to_string(row.size()) + " fields, header has " +
                            std::to_string(table.columns.size()));
    table.rows.push_back(std::move(row));
  }
  return table;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str());
}

std::string to_csv(const CsvTable& table) {
  std::string out = schema_line(table.schema);
  out += csv_line(table.columns);
  for (const auto& row : table.rows) out += csv_line(row);
  return out;
}

}  // namespace panelsvd
