#pragma once

#include <istream>
#include <string>
#include <vector>

namespace titlerec {

// Comma-separated reader with double-quote quoting (RFC 4180): quoted fields
// may contain commas, doubled quotes and line breaks. CRLF and a leading
// UTF-8 byte-order mark are accepted.
class CsvReader {
 public:
  explicit CsvReader(std::istream& in);

  // Reads the next record into fields. Returns false at end of input.
  // Blank lines are skipped.
  bool next(std::vector<std::string>& fields);

  // 1-based physical line on which the last returned record started.
  std::size_t line() const { return record_line_; }

 private:
  std::istream& in_;
  std::size_t current_line_ = 1;
  std::size_t record_line_ = 0;
  bool first_ = true;
};

}  // namespace titlerec
