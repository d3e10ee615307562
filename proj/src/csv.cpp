#include "cstafnet/csv.hpp"

#include <fstream>

#include "cstafnet/errors.hpp"

namespace cstafnet::csv {

namespace {

// Reads one record; returns false at end of input. `line` tracks physical lines.
bool read_record(std::istream& in, std::vector<std::string>& fields, std::size_t& line) {
  fields.clear();
  if (in.peek() == std::char_traits<char>::eof()) return false;
  std::string field;
  bool quoted = false;
  bool field_started_quoted = false;
  const std::size_t start_line = line;
  char c;
  while (in.get(c)) {
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && field.empty() && !field_started_quoted) {
      quoted = true;
      field_started_quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
      field_started_quoted = false;
    } else if (c == '\r') {
      // CRLF line endings
    } else if (c == '\n') {
      ++line;
      fields.push_back(std::move(field));
      return true;
    } else {
      field.push_back(c);
    }
  }
  if (quoted) throw ParseError("unterminated quoted field in record starting at line " + std::to_string(start_line));
  fields.push_back(std::move(field));
  ++line;
  return true;
}

}  // namespace

Document read(std::istream& in, bool allow_ragged) {
  Document doc;
  std::size_t line = 1;
  if (in.peek() == 0xEF) {
    char bom[3];
    in.read(bom, 3);
    if (!(static_cast<unsigned char>(bom[1]) == 0xBB && static_cast<unsigned char>(bom[2]) == 0xBF)) {
      in.clear();
      in.seekg(0);
    }
  }
  if (!read_record(in, doc.header, line)) throw ParseError("CSV input has no header row");
  std::vector<std::string> fields;
  for (;;) {
    const std::size_t start = line;
    if (!read_record(in, fields, line)) break;
    // A trailing blank line is not a record.
    if (fields.size() == 1 && fields[0].empty() && in.peek() == std::char_traits<char>::eof()) break;
    if (fields.size() == 1 && fields[0].empty()) continue;
    if (!allow_ragged && fields.size() != doc.header.size())
      throw ParseError("data row " + std::to_string(doc.rows.size() + 1) + " (line " + std::to_string(start) + ") has " + std::to_string(fields.size()) +
                       " fields, header has " + std::to_string(doc.header.size()));
    doc.rows.push_back(fields);
    doc.line_numbers.push_back(start);
  }
  return doc;
}

Document read_file(const std::string& path, bool allow_ragged) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open CSV file '" + path + "'");
  return read(in, allow_ragged);
}

std::string escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

void write_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << escape(fields[i]);
  }
  out << '\n';
}

}  // namespace cstafnet::csv
