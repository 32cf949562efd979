#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace diagt {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define DIAGT_DEFINE_ERROR(Name) \
  class Name : public Error {    \
   public:                       \
    using Error::Error;          \
  }

DIAGT_DEFINE_ERROR(IndexError);
DIAGT_DEFINE_ERROR(DuplicateEntryError);
DIAGT_DEFINE_ERROR(DegenerateShapeError);
DIAGT_DEFINE_ERROR(ShapeError);
DIAGT_DEFINE_ERROR(ConfigError);
DIAGT_DEFINE_ERROR(DegenerateLabelsError);
DIAGT_DEFINE_ERROR(EmptyDataError);
DIAGT_DEFINE_ERROR(DivergenceError);
DIAGT_DEFINE_ERROR(InsufficientDataError);
DIAGT_DEFINE_ERROR(IoError);

#undef DIAGT_DEFINE_ERROR

/// Malformed input; carries the 1-based line number of the offending line.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  [[nodiscard]] std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace diagt
