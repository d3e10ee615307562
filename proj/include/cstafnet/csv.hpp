#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace cstafnet::csv {

struct Document {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  // 1-based physical line on which each row started (header is line 1).
  std::vector<std::size_t> line_numbers;
};

// Comma-separated, RFC 4180 double-quote escaping, quoted fields may span
// lines. A UTF-8 byte-order mark before the header is skipped.
// With `allow_ragged` false a row with the wrong field count is a ParseError.
Document read(std::istream& in, bool allow_ragged = false);
Document read_file(const std::string& path, bool allow_ragged = false);

std::string escape(const std::string& field);
void write_row(std::ostream& out, const std::vector<std::string>& fields);

}  // namespace cstafnet::csv
