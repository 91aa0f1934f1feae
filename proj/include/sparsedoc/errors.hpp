#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sparsedoc {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input; `line` is 1-based, 0 when not line-oriented.
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Input that parses but breaks an invariant (duplicate id, empty list...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Lookup of something that does not exist (unknown entity id, absent term).
class NotFoundError : public Error {
 public:
  using Error::Error;
};

}  // namespace sparsedoc
