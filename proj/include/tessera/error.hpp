#pragma once

#include <stdexcept>
#include <string>

namespace tessera {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed task graph: cycles, several entry tasks, empty variant lists.
class StructuralError : public Error {
 public:
  using Error::Error;
};

/// Inputs that are individually valid but do not fit together
/// (missing edge factors, unknown task ids, keys absent from a profile).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A data file violates one of its invariants. `line` is 1-based, 0 if unknown.
class ValidationError : public Error {
 public:
  ValidationError(const std::string& what, int line = 0)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

}  // namespace tessera
