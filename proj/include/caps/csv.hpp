#pragma once

#include <charconv>
#include <cstdlib>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "caps/errors.hpp"

namespace caps::csv {

inline constexpr int kSchemaVersion = 1;

// Minimal RFC 4180 reader: quoted fields, doubled quotes, CRLF tolerant.
// A leading "# schema_version=N" comment line is recognised; other lines
// starting with '#' are skipped.
struct Table {
  int schema_version = kSchemaVersion;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row

  std::size_t column(const std::string& name, const std::string& source = {}) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw FormatError(source, "missing column '" + name + "'");
  }
};

inline std::vector<std::string> split_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

inline Table parse(std::istream& in, const std::string& source) {
  Table table;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      constexpr std::string_view key = "# schema_version=";
      if (!have_header && line.rfind(key, 0) == 0) table.schema_version = std::atoi(line.c_str() + key.size());
      continue;
    }
    auto fields = split_line(line);
    if (!have_header) {
      table.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != table.header.size())
      throw FormatError(source + ":" + std::to_string(line_no),
                        "expected " + std::to_string(table.header.size()) + " fields, got " +
                            std::to_string(fields.size()));
    table.rows.push_back(std::move(fields));
    table.line_numbers.push_back(line_no);
  }
  if (!have_header) throw FormatError(source, "empty CSV (no header row)");
  if (table.schema_version > kSchemaVersion)
    throw VersionError(source + ": schema_version " + std::to_string(table.schema_version) +
                       " is newer than supported version " + std::to_string(kSchemaVersion));
  return table;
}

inline Table parse_string(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  return parse(in, source);
}

inline double to_double(const std::string& field, const std::string& location) {
  double value = 0.0;
  const char* first = field.data();
  const char* last = first + field.size();
  while (first < last && *first == ' ') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last) throw FormatError(location, "not a number: '" + field + "'");
  return value;
}

inline long long to_integer(const std::string& field, const std::string& location) {
  const double value = to_double(field, location);
  const auto rounded = static_cast<long long>(value);
  if (static_cast<double>(rounded) != value) throw FormatError(location, "not an integer: '" + field + "'");
  return rounded;
}

inline std::string quote(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace caps::csv
