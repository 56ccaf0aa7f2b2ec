#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace migproj {

/// Base class for every error raised by the library. The CLI maps the
/// concrete subclass onto a process exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text. Carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Input parsed fine but violates a domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Operands whose shapes do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// File missing, unreadable or unwritable.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Non-finite densities, singular systems and similar numerical failures.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace migproj
