#pragma once

#include <stdexcept>
#include <string>

namespace coopex {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A round-trip efficiency outside (0, 1].
class InvalidEfficiency : public Error {
 public:
  using Error::Error;
};

/// Mismatched dimensions or an otherwise malformed problem instance.
class StructuralError : public Error {
 public:
  using Error::Error;
};

/// NaN / infinite input, or a constant too large for exact integer pivoting.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A settlement identity (weights summing to one, losses adding up) failed.
class SettlementError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed profile data. Carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}

  [[nodiscard]] std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace coopex
