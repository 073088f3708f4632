#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bsr {

// Root of every error the library raises. The CLI maps the three families
// below onto exit statuses 2 (validation), 3 (IO) and 4 (numerical).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class ParseError : public ValidationError {
 public:
  ParseError(const std::string& what, std::size_t position)
      : ValidationError("syntax error at position " + std::to_string(position) + ": " + what),
        position_(position) {}

  // 1-based byte offset; end of input is reported as length + 1.
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class OverParameterizedError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class UnfittableModelError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class DegenerateFitError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace bsr
