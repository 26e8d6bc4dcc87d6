#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "fairproj/error.hpp"

namespace fairproj::csv {

using Record = std::vector<std::string>;

/// RFC-4180 reader: comma separated, double-quote quoting with "" escapes,
/// CRLF or LF line ends, quoted fields may span lines. A leading UTF-8 BOM is
/// skipped.
inline std::vector<Record> parse(std::string_view text) {
  if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);
  std::vector<Record> records;
  Record current;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;

  auto end_field = [&] {
    current.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    // A blank line yields a single empty field; skip it.
    if (!(current.size() == 1 && current.front().empty())) records.push_back(std::move(current));
    current.clear();
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (field_started) {
          throw CsvError("stray quote inside unquoted field on line " + std::to_string(line),
                         {line, {}});
        }
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
        [[fallthrough]];
      case '\n':
        end_record();
        ++line;
        break;
      default:
        field.push_back(c);
        field_started = true;
    }
  }
  if (in_quotes) throw CsvError("unterminated quoted field", {line, {}});
  if (field_started || !field.empty() || !current.empty()) end_record();
  return records;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

inline std::vector<Record> read(const std::string& path) { return parse(read_file(path)); }

inline std::string quote(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

enum class ParseStatus { Ok, NotNumeric, NotFinite };

/// Strict numeric parse: the whole field must be a decimal number. NaN and
/// infinities are reported separately so callers can reject them precisely.
inline ParseStatus parse_double(std::string_view text, double& out) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t')) text.remove_suffix(1);
  if (text.empty()) return ParseStatus::NotNumeric;
  if (text.front() == '+') text.remove_prefix(1);
  const auto res = std::from_chars(text.data(), text.data() + text.size(), out);
  if (res.ec == std::errc::result_out_of_range) return ParseStatus::NotFinite;
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) return ParseStatus::NotNumeric;
  if (!std::isfinite(out)) return ParseStatus::NotFinite;
  return ParseStatus::Ok;
}

inline void write_record(std::ostream& os, const Record& rec) {
  for (std::size_t i = 0; i < rec.size(); ++i) {
    if (i) os << ',';
    os << quote(rec[i]);
  }
  os << '\n';
}

}  // namespace fairproj::csv
