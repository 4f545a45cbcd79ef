#ifndef SPECBIAS_CSV_HPP
#define SPECBIAS_CSV_HPP

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "specbias/types.hpp"

namespace specbias::csv {

/// 17 significant digits, enough to round-trip any double.
inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_double(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw Error("not a number: '" + s + "'");
  }
  if (used != s.size()) throw Error("not a number: '" + s + "'");
  return v;
}

inline long long parse_int(const std::string& s) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw Error("not an integer: '" + s + "'");
  return v;
}

/// Reads a headed CSV; rows are returned without the header, which must match.
inline std::vector<std::vector<std::string>> read(const std::filesystem::path& path,
                                                  const std::string& expected_header) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(path.string() + " is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != expected_header)
    throw Error(path.string() + ": header '" + line + "', expected '" + expected_header + "'");
  const std::size_t width = split(expected_header).size();
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != width)
      throw Error(path.string() + ": row has " + std::to_string(cells.size()) + " cells, expected " +
                  std::to_string(width));
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace specbias::csv

#endif  // SPECBIAS_CSV_HPP
