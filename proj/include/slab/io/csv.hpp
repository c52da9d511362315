#pragma once

// Minimal RFC 4180 reader/writer. All tables the toolkit produces go through
// CsvWriter so that number formatting is identical on every run.

#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "slab/error.hpp"

namespace slab::io {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    return std::nullopt;
  }

  std::size_t require_column(std::string_view name, std::string_view source) const {
    auto idx = column(name);
    if (!idx) {
      throw ValidationError(fmt::format("{}: missing column '{}'", source, name));
    }
    return *idx;
  }
};

namespace detail {

inline std::vector<std::vector<std::string>> split_records(std::string_view text,
                                                           std::string_view source) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t i = 0;
  if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") i = 3;  // BOM
  for (; i < text.size(); ++i) {
    char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        record.push_back(std::move(field));
        field.clear();
        field_started = true;
        break;
      case '\r':
        break;
      case '\n':
        if (field_started || !field.empty() || !record.empty()) {
          record.push_back(std::move(field));
          records.push_back(std::move(record));
        }
        field.clear();
        record.clear();
        field_started = false;
        break;
      default:
        field.push_back(c);
        field_started = true;
    }
  }
  if (in_quotes) throw ValidationError(fmt::format("{}: unterminated quoted field", source));
  if (field_started || !field.empty() || !record.empty()) {
    record.push_back(std::move(field));
    records.push_back(std::move(record));
  }
  return records;
}

}  // namespace detail

inline CsvTable parse_csv(std::string_view text, std::string_view source = "<csv>") {
  auto records = detail::split_records(text, source);
  CsvTable table;
  if (records.empty()) return table;
  table.header = std::move(records.front());
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != table.header.size()) {
      throw ValidationError(fmt::format("{}: row {} has {} fields, header has {}", source, r,
                                        records[r].size(), table.header.size()));
    }
    table.rows.push_back(std::move(records[r]));
  }
  return table;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(fmt::format("cannot open '{}'", path));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline CsvTable read_csv(const std::string& path) { return parse_csv(read_file(path), path); }

inline double parse_double(std::string_view cell, std::string_view source, std::size_t row,
                           std::string_view column) {
  double value = 0.0;
  const char* begin = cell.data();
  const char* end = cell.data() + cell.size();
  while (begin < end && *begin == ' ') ++begin;
  if (begin < end && *begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end || begin == end) {
    std::string lowered(cell);
    for (auto& ch : lowered) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (lowered == "nan" || lowered == "na" || lowered.empty()) {
      throw ValidationError(fmt::format("{}: row {}, column '{}': missing value '{}'", source, row,
                                        column, cell));
    }
    throw ValidationError(
        fmt::format("{}: row {}, column '{}': cannot parse '{}'", source, row, column, cell));
  }
  return value;
}

inline long long parse_int(std::string_view cell, std::string_view source, std::size_t row,
                           std::string_view column) {
  long long value = 0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc{} || ptr != cell.data() + cell.size() || cell.empty()) {
    throw ValidationError(fmt::format("{}: row {}, column '{}': cannot parse integer '{}'", source,
                                      row, column, cell));
  }
  return value;
}

/// Formats a double with 12 significant digits; non-finite values are
/// spelled `inf`, `-inf` and `nan`.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";
  return fmt::format("{:.12g}", v);
}

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : columns_(header.size()) {
    write_row(header);
  }

  CsvWriter& row(const std::vector<std::string>& fields) {
    if (fields.size() != columns_) {
      throw ValidationError(
          fmt::format("csv row has {} fields, expected {}", fields.size(), columns_));
    }
    write_row(fields);
    return *this;
  }

  const std::string& str() const { return out_; }

  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ValidationError(fmt::format("cannot write '{}'", path));
    f << out_;
  }

  static std::string quote(std::string_view field) {
    bool needs = field.find_first_of(",\"\n\r") != std::string_view::npos;
    if (!needs) return std::string(field);
    std::string q = "\"";
    for (char c : field) {
      if (c == '"') q.push_back('"');
      q.push_back(c);
    }
    q.push_back('"');
    return q;
  }

 private:
  void write_row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out_.push_back(',');
      out_ += quote(fields[i]);
    }
    out_.push_back('\n');
  }

  std::size_t columns_;
  std::string out_;
};

}  // namespace slab::io
