#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace frec {

/// Broad failure classes; the CLI maps each one onto an exit code.
enum class ErrorClass { usage, data, numeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorClass cls, const std::string& what) : std::runtime_error(what), cls_(cls) {}
  ErrorClass error_class() const noexcept { return cls_; }

 private:
  ErrorClass cls_;
};

/// Shape or index contract violated by a caller of the tensor library.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(ErrorClass::usage, what) {}
};

/// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorClass::numeric, what) {}
};

/// Malformed or inconsistent input data. `line` is 1-based, 0 when not tied to a line.
class DataError : public Error {
 public:
  enum class Kind {
    malformed_line,
    rating_out_of_range,
    unknown_gender,
    too_many_ages,
    unknown_genre,
    unknown_word,
    unknown_age,
    unknown_user,
    unknown_movie,
    io,
    bad_magic,
    version_mismatch,
    truncated_file,
  };

  DataError(Kind kind, const std::string& what, std::size_t line = 0)
      : Error(ErrorClass::data, what), kind_(kind), line_(line) {}

  Kind kind() const noexcept { return kind_; }
  std::size_t line() const noexcept { return line_; }

 private:
  Kind kind_;
  std::size_t line_;
};

}  // namespace frec
