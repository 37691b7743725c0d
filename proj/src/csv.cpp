#include <fstream>
#include <sstream>

#include "tcl/data.hpp"

namespace tcl {

RawTable parse_csv(std::string_view text, const CsvOptions& opts) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::size_t> record_line;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;
  std::size_t row_line = 1;

  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    // Blank lines are skipped.
    if (!(row.size() == 1 && row[0].empty())) {
      records.push_back(std::move(row));
      record_line.push_back(row_line);
    }
    row.clear();
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
    if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == opts.delimiter) {
      end_field();
    } else if (c == '\r') {
      // swallowed; the following '\n' ends the record
    } else if (c == '\n') {
      end_row();
      ++line;
      row_line = line;
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (in_quotes) throw FormatError("csv: unterminated quoted field starting on line " +
                                   std::to_string(row_line));
  if (!field.empty() || !row.empty()) end_row();

  if (records.empty()) throw FormatError("csv: no header row");
  RawTable t;
  t.header = std::move(records.front());
  for (auto& h : t.header) {
    // trim surrounding blanks in column names
    const auto b = h.find_first_not_of(" \t");
    const auto e = h.find_last_not_of(" \t");
    h = b == std::string::npos ? std::string() : h.substr(b, e - b + 1);
  }
  t.rows.reserve(records.size() - 1);
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != t.header.size()) {
      throw FormatError("csv: row " + std::to_string(r) + " (line " +
                        std::to_string(record_line[r]) + ") has " +
                        std::to_string(records[r].size()) + " fields, expected " +
                        std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(records[r]));
  }
  return t;
}

RawTable read_csv(const std::filesystem::path& path, const CsvOptions& opts) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string text = ss.str();
  // UTF-8 byte order mark
  if (text.size() >= 3 && text.compare(0, 3, "\xEF\xBB\xBF") == 0) text.erase(0, 3);
  return parse_csv(text, opts);
}

}  // namespace tcl
