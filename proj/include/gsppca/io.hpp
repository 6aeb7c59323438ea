#ifndef GSPPCA_IO_HPP
#define GSPPCA_IO_HPP

// CSV matrices, name lists and support masks. Numbers are written in the
// shortest form that round-trips exactly.

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "json.hpp"

#include "gsppca/error.hpp"
#include "gsppca/evidence.hpp"
#include "gsppca/linalg.hpp"

namespace gsppca {

/// Input file problems (missing, unreadable, malformed).
class InputError : public Error {
public:
  using Error::Error;
};

struct CsvTable {
  Matrix values;
  std::vector<std::string> header;  ///< empty unless read with a header row
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double parse_double(std::string_view s, std::size_t line, std::size_t col) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
    throw InputError("CSV line " + std::to_string(line) + ", field " + std::to_string(col) +
                     ": not a number: '" + std::string(s) + "'");
  return v;
}

inline std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw Error("format_double: conversion failed");
  return std::string(buf, ptr);
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "' for reading");
  return in;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open '" + path + "' for writing");
  return out;
}

}  // namespace detail

/// Comma-separated numeric matrix; blank lines are skipped, rows must have
/// equal length.
inline CsvTable read_csv(std::istream& in, bool header = false) {
  CsvTable out;
  std::vector<double> data;
  std::size_t cols = 0, rows = 0, lineno = 0;
  std::string line;
  bool need_header = header;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_commas(line);
    if (need_header) {
      for (auto f : fields) out.header.emplace_back(f);
      cols = fields.size();
      need_header = false;
      continue;
    }
    if (cols == 0) cols = fields.size();
    if (fields.size() != cols)
      throw InputError("CSV line " + std::to_string(lineno) + ": expected " + std::to_string(cols) +
                       " fields, found " + std::to_string(fields.size()));
    for (std::size_t j = 0; j < fields.size(); ++j) data.push_back(detail::parse_double(fields[j], lineno, j + 1));
    ++rows;
  }
  out.values.resize(static_cast<Index>(rows), static_cast<Index>(cols));
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      out.values(static_cast<Index>(i), static_cast<Index>(j)) = data[i * cols + j];
  return out;
}

inline CsvTable read_csv(const std::string& path, bool header = false) {
  auto in = detail::open_input(path);
  return read_csv(in, header);
}

inline void write_csv(std::ostream& out, const Matrix& m, const std::vector<std::string>& header = {}) {
  if (!header.empty()) {
    for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
    out << '\n';
  }
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << detail::format_double(m(i, j));
    out << '\n';
  }
}

inline void write_csv(const std::string& path, const Matrix& m, const std::vector<std::string>& header = {}) {
  auto out = detail::open_output(path);
  write_csv(out, m, header);
  if (!out) throw InputError("write to '" + path + "' failed");
}

/// One identifier per non-empty line.
inline std::vector<std::string> read_names(const std::string& path) {
  auto in = detail::open_input(path);
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    const auto t = detail::trim(line);
    if (!t.empty()) names.emplace_back(t);
  }
  return names;
}

inline SupportVector mask_from_json(const nlohmann::json& j) {
  const nlohmann::json* arr = &j;
  if (j.is_object()) {
    if (!j.contains("support")) throw InputError("mask JSON: missing \"support\" array");
    arr = &j.at("support");
  }
  if (!arr->is_array()) throw InputError("mask JSON: \"support\" must be an array");
  std::vector<std::uint8_t> mask;
  for (const auto& v : *arr) {
    if (v.is_boolean())
      mask.push_back(v.get<bool>() ? 1 : 0);
    else if (v.is_number_integer() && (v.get<int>() == 0 || v.get<int>() == 1))
      mask.push_back(static_cast<std::uint8_t>(v.get<int>()));
    else
      throw InputError("mask JSON: entries must be 0/1 or booleans");
  }
  return SupportVector(std::move(mask));
}

/// Support mask from a JSON report/sidecar ("support": [0/1 ...]) or a CSV
/// of 0/1 values laid out as a single row or a single column.
inline SupportVector read_mask(const std::string& path) {
  auto in = detail::open_input(path);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && (text[first] == '{' || text[first] == '[')) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw InputError("'" + path + "': invalid JSON: " + e.what());
    }
    return mask_from_json(j);
  }
  std::istringstream ss(text);
  const auto t = read_csv(ss, false);
  if (t.values.rows() != 1 && t.values.cols() != 1)
    throw InputError("'" + path + "': mask CSV must be a single row or column");
  std::vector<std::uint8_t> mask;
  for (Index k = 0; k < t.values.size(); ++k) {
    const double v = t.values.data()[k];
    if (v != 0.0 && v != 1.0) throw InputError("'" + path + "': mask entries must be 0 or 1");
    mask.push_back(static_cast<std::uint8_t>(v));
  }
  return SupportVector(std::move(mask));
}

}  // namespace gsppca

#endif  // GSPPCA_IO_HPP
