#include "titlerec/csv.hpp"

#include "titlerec/error.hpp"

namespace titlerec {

CsvReader::CsvReader(std::istream& in) : in_(in) {}

bool CsvReader::next(std::vector<std::string>& fields) {
  fields.clear();
  if (first_) {
    first_ = false;
    if (in_.peek() == 0xEF) {
      char bom[3];
      in_.read(bom, 3);
      if (!(bom[1] == '\xBB' && bom[2] == '\xBF')) {
        // Not a BOM after all; rewind.
        in_.clear();
        in_.seekg(0);
      }
    }
  }

  std::string field;
  bool in_quotes = false;
  bool any = false;
  bool quoted_field = false;
  record_line_ = current_line_;

  for (int ch = in_.get(); ch != std::char_traits<char>::eof(); ch = in_.get()) {
    const char c = static_cast<char>(ch);
    if (in_quotes) {
      if (c == '"') {
        if (in_.peek() == '"') {
          in_.get();
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++current_line_;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field.empty() || quoted_field) {
          fail(ErrorCode::MalformedRow,
               "line " + std::to_string(current_line_) + ": stray quote inside field");
        }
        in_quotes = true;
        quoted_field = true;
        any = true;
        break;
      case ',':
        fields.push_back(std::move(field));
        field.clear();
        quoted_field = false;
        any = true;
        break;
      case '\r':
        break;
      case '\n':
        ++current_line_;
        if (!any && field.empty()) {
          record_line_ = current_line_;
          break;  // blank line
        }
        fields.push_back(std::move(field));
        return true;
      default:
        if (quoted_field) {
          fail(ErrorCode::MalformedRow,
               "line " + std::to_string(current_line_) + ": text after closing quote");
        }
        field.push_back(c);
        any = true;
    }
  }
  if (in_quotes) {
    fail(ErrorCode::MalformedRow,
         "line " + std::to_string(record_line_) + ": unterminated quoted field");
  }
  if (!any && field.empty()) return false;
  fields.push_back(std::move(field));
  return true;
}

}  // namespace titlerec
