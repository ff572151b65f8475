#pragma once

// Minimal RFC 4180 reader: quoted fields, doubled quotes, CRLF or LF.

#include <string>
#include <string_view>
#include <vector>

#include "stm/error.hpp"

namespace stm::csv {

using Row = std::vector<std::string>;

class Reader {
 public:
  explicit Reader(std::string_view bytes) : s_(bytes) {
    if (s_.size() >= 3 && s_.substr(0, 3) == "\xEF\xBB\xBF") pos_ = 3;
  }

  // Reads the next record into row; false at end of input. Blank lines are
  // skipped.
  bool next(Row& row) {
    row.clear();
    while (pos_ < s_.size()) {
      line_ = next_line_;
      if (s_[pos_] == '\n' || s_[pos_] == '\r') {
        skip_eol();
        continue;
      }
      std::string field;
      bool quoted = false;
      while (true) {
        if (pos_ >= s_.size()) {
          if (quoted) throw ParseError("csv: unterminated quoted field", line_);
          row.push_back(std::move(field));
          return true;
        }
        const char c = s_[pos_];
        if (quoted) {
          if (c == '"') {
            if (pos_ + 1 < s_.size() && s_[pos_ + 1] == '"') {
              field.push_back('"');
              pos_ += 2;
            } else {
              quoted = false;
              ++pos_;
            }
          } else {
            if (c == '\n') ++next_line_;
            field.push_back(c);
            ++pos_;
          }
        } else if (c == '"' && field.empty()) {
          quoted = true;
          ++pos_;
        } else if (c == ',') {
          row.push_back(std::move(field));
          field.clear();
          ++pos_;
        } else if (c == '\n' || c == '\r') {
          row.push_back(std::move(field));
          skip_eol();
          return true;
        } else {
          field.push_back(c);
          ++pos_;
        }
      }
    }
    return false;
  }

  // 1-based line on which the last returned record started.
  std::size_t line() const { return line_; }

 private:
  void skip_eol() {
    if (s_[pos_] == '\r') ++pos_;
    if (pos_ < s_.size() && s_[pos_] == '\n') ++pos_;
    ++next_line_;
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t next_line_ = 1;
};

}  // namespace stm::csv
