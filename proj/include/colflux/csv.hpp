#pragma once

// Minimal CSV with "# key=value" metadata lines ahead of the header. Doubles
// are written in shortest round-trip form so files reload bit-exactly.

#include <charconv>
#include <cstddef>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "colflux/errors.hpp"

namespace colflux {

inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last) throw FormatError("not a number: '" + std::string(s) + "'");
  return v;
}

class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& os) : os_(os) {}

  void meta(const std::string& key, const std::string& value) { os_ << "# " << key << '=' << value << '\n'; }

  void header(std::span<const std::string> names) {
    columns_ = names.size();
    for (std::size_t i = 0; i < names.size(); ++i) os_ << (i ? "," : "") << names[i];
    os_ << '\n';
  }

  void row(std::span<const double> values) {
    check(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) os_ << (i ? "," : "") << format_double(values[i]);
    os_ << '\n';
  }

  void row(std::span<const std::string> cells) {
    check(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) os_ << (i ? "," : "") << cells[i];
    os_ << '\n';
  }

 private:
  void check(std::size_t n) const {
    if (columns_ != 0 && n != columns_) throw ShapeError("csv row has " + std::to_string(n) + " cells, header has " +
                                                         std::to_string(columns_));
  }
  std::ostream& os_;
  std::size_t columns_ = 0;
};

struct CsvTable {
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> cells;

  [[nodiscard]] std::size_t rows() const { return cells.size(); }

  [[nodiscard]] std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (columns[i] == name) return i;
    }
    throw FormatError("csv: missing column '" + name + "'");
  }
  [[nodiscard]] bool has_column(const std::string& name) const {
    for (const auto& c : columns) {
      if (c == name) return true;
    }
    return false;
  }

  [[nodiscard]] double number(std::size_t row, std::size_t col) const { return parse_double(cells.at(row).at(col)); }

  [[nodiscard]] std::string meta_value(const std::string& key, const std::string& fallback = "") const {
    for (const auto& [k, v] : meta) {
      if (k == key) return v;
    }
    return fallback;
  }
};

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline CsvTable read_csv(std::istream& is) {
  CsvTable t;
  std::string line;
  bool have_header = false;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!have_header && line.rfind("# ", 0) == 0) {
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos) throw FormatError("csv: malformed metadata on line " + std::to_string(line_no));
      t.meta.emplace_back(line.substr(2, eq - 2), line.substr(eq + 1));
      continue;
    }
    auto cells = split_csv_line(line);
    if (!have_header) {
      t.columns = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != t.columns.size()) {
      throw FormatError("csv: line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                        " cells, expected " + std::to_string(t.columns.size()));
    }
    t.cells.push_back(std::move(cells));
  }
  if (!have_header) throw FormatError("csv: no header line");
  return t;
}

inline CsvTable read_csv_string(const std::string& text) {
  std::istringstream is(text);
  return read_csv(is);
}

}  // namespace colflux
