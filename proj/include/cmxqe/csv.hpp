#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace cmxqe::csv {

struct Row {
  std::size_t line = 0;  // 1-based physical line where the row starts
  std::vector<std::string> fields;
};

struct Document {
  std::vector<Row> rows;
  // Set when the input ends inside a quoted field; holds the opening line.
  std::size_t unterminated_quote_line = 0;
};

/// Comma-delimited, double-quote escaped ("" inside quotes), CRLF or LF line
/// endings, quoted fields may span lines. Blank lines are skipped.
Document parse(std::string_view text);

std::string escape(std::string_view field);

std::string join(const std::vector<std::string>& fields);

}  // namespace cmxqe::csv
