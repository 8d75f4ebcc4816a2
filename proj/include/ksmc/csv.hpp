#pragma once

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ksmc/common.hpp"

namespace ksmc {

/// Shortest round-trip decimal for a double; keeps CSV output byte-stable
/// across reruns.
inline std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

/// Minimal CSV table writer: header fixed at construction, one append per row.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : header_(std::move(header)) {}

  const std::vector<std::string>& header() const { return header_; }

  void append(std::vector<std::string> row) {
    if (row.size() != header_.size())
      throw ArgumentError("CsvWriter: row width does not match header");
    rows_.push_back(std::move(row));
  }

  void write(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ArgumentError("CsvWriter: cannot open " + path);
    out << join(header_) << "\n";
    for (const auto& row : rows_) out << join(row) << "\n";
  }

  std::size_t row_count() const { return rows_.size(); }

 private:
  static std::string join(const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) line += ',';
      line += cells[i];
    }
    return line;
  }

  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    throw ArgumentError("CsvTable: no column named '" + name + "'");
  }

  double value(std::size_t row, const std::string& name) const {
    return std::stod(rows.at(row).at(static_cast<std::size_t>(column(name))));
  }
};

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("read_csv: cannot open " + path);
  CsvTable table;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    if (first) {
      table.header = std::move(cells);
      first = false;
    } else {
      table.rows.push_back(std::move(cells));
    }
  }
  return table;
}

/// Median and quartiles by linear interpolation; used for the aggregate table.
struct QuartileSummary {
  double median = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
};

inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw ArgumentError("quantile_sorted: empty sample");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

inline QuartileSummary summarize_quartiles(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  QuartileSummary s;
  s.q25 = quantile_sorted(values, 0.25);
  s.median = quantile_sorted(values, 0.5);
  s.q75 = quantile_sorted(values, 0.75);
  return s;
}

}  // namespace ksmc
