#pragma once

// Minimal CSV reading and writing for the long-format panel files.
// Fields are unquoted; the first row is a mandatory header.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "migproj/error.hpp"

namespace migproj::csv {

struct Row {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.emplace_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Parses `text` and checks that the header equals `expected_header`.
/// Blank lines are skipped; every data row must have the header's width.
inline std::vector<Row> parse(std::string_view text, const std::vector<std::string>& expected_header,
                              const std::string& source) {
  if (text.size() >= 3 && static_cast<unsigned char>(text[0]) == 0xEF &&
      static_cast<unsigned char>(text[1]) == 0xBB && static_cast<unsigned char>(text[2]) == 0xBF) {
    text.remove_prefix(3);
  }
  std::vector<Row> rows;
  bool header_seen = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = trim(text.substr(pos, end - pos));
    ++line_no;
    pos = end + 1;
    if (line.empty()) {
      if (end == text.size()) break;
      continue;
    }
    auto fields = split(line);
    if (!header_seen) {
      if (fields != expected_header) {
        std::string want;
        for (std::size_t i = 0; i < expected_header.size(); ++i) {
          want += (i ? "," : "") + expected_header[i];
        }
        throw ParseError(source, line_no, "expected header '" + want + "'");
      }
      header_seen = true;
    } else {
      if (fields.size() != expected_header.size()) {
        throw ParseError(source, line_no,
                         "expected " + std::to_string(expected_header.size()) + " fields, got " +
                             std::to_string(fields.size()));
      }
      rows.push_back(Row{line_no, std::move(fields)});
    }
    if (end == text.size()) break;
  }
  if (!header_seen) throw ParseError(source, 1, "missing header row");
  return rows;
}

inline std::vector<Row> read(const std::filesystem::path& path, const std::vector<std::string>& header) {
  return parse(read_file(path), header, path.string());
}

inline bool is_missing_token(std::string_view s) { return s.empty() || s == "NA" || s == "NaN" || s == "nan"; }

/// Parses a finite double; "NA" / empty yield NaN when `allow_missing`.
inline double to_double(std::string_view s, const std::string& source, std::size_t line, bool allow_missing) {
  if (is_missing_token(s)) {
    if (allow_missing) return std::numeric_limits<double>::quiet_NaN();
    throw ParseError(source, line, "missing numeric value");
  }
  double v = 0.0;
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || !std::isfinite(v)) {
    throw ParseError(source, line, "not a finite number: '" + std::string(s) + "'");
  }
  return v;
}

inline int to_int(std::string_view s, const std::string& source, std::size_t line) {
  int v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) {
    throw ParseError(source, line, "not an integer: '" + std::string(s) + "'");
  }
  return v;
}

/// Shortest representation that round-trips exactly; NaN is written as NA.
inline void append_double(std::string& out, double v) {
  if (std::isnan(v)) {
    out += "NA";
    return;
  }
  char buf[32];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, p);
}

inline std::string format_double(double v) {
  std::string s;
  append_double(s, v);
  return s;
}

/// Writes through a sibling temporary file and renames it into place.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

}  // namespace migproj::csv
