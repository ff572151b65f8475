#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace stm {

// Base class for every error raised by the library on bad input or
// violated preconditions. The CLI maps these to exit status 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file. Carries the 1-based line (0 if unknown) and the
// feature/row index (npos if not applicable).
class ParseError : public Error {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  ParseError(const std::string& what, std::size_t line, std::size_t item = npos)
      : Error(format(what, line, item)), line_(line), item_(item) {}

  std::size_t line() const { return line_; }
  std::size_t item() const { return item_; }

 private:
  static std::string format(const std::string& what, std::size_t line, std::size_t item) {
    std::string s = what;
    if (line != 0) s += " (line " + std::to_string(line) + ")";
    if (item != npos) s += " (feature " + std::to_string(item) + ")";
    return s;
  }

  std::size_t line_;
  std::size_t item_;
};

}  // namespace stm
