#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "bankxai/error.hpp"

namespace bankxai {

// One parsed CSV line. `line` is the 1-based physical line the record starts
// on (the header is line 1).
struct CsvRow {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

// RFC 4180 reader: comma separated, double-quote quoting with "" escapes,
// quoted fields may span lines, CRLF or LF endings. A UTF-8 BOM is skipped.
// Blank lines are ignored.
inline std::vector<CsvRow> read_csv(std::string_view text) {
  std::vector<CsvRow> rows;
  std::size_t pos = 0;
  if (text.substr(0, 3) == "\xEF\xBB\xBF") pos = 3;

  std::size_t line = 1;
  while (pos < text.size()) {
    CsvRow row;
    row.line = line;
    std::string field;
    bool in_quotes = false;
    bool field_was_quoted = false;
    bool row_done = false;
    while (!row_done) {
      if (pos >= text.size()) {
        if (in_quotes) throw ParseError("unterminated quoted field", pos);
        row.fields.push_back(std::move(field));
        break;
      }
      const char c = text[pos];
      if (in_quotes) {
        if (c == '"') {
          if (pos + 1 < text.size() && text[pos + 1] == '"') {
            field.push_back('"');
            pos += 2;
          } else {
            in_quotes = false;
            ++pos;
          }
        } else {
          if (c == '\n') ++line;
          field.push_back(c);
          ++pos;
        }
        continue;
      }
      switch (c) {
        case '"':
          if (!field.empty() || field_was_quoted) {
            throw ParseError("unexpected quote inside unquoted field", pos);
          }
          in_quotes = true;
          field_was_quoted = true;
          ++pos;
          break;
        case ',':
          row.fields.push_back(std::move(field));
          field.clear();
          field_was_quoted = false;
          ++pos;
          break;
        case '\r':
          ++pos;
          break;
        case '\n':
          row.fields.push_back(std::move(field));
          ++pos;
          ++line;
          row_done = true;
          break;
        default:
          if (field_was_quoted) throw ParseError("text after closing quote", pos);
          field.push_back(c);
          ++pos;
      }
    }
    const bool blank = row.fields.size() == 1 && row.fields[0].empty();
    if (!blank) rows.push_back(std::move(row));
  }
  return rows;
}

// Quotes a field when it contains a separator, quote, or line break.
inline std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace bankxai
