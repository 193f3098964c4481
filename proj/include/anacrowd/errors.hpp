#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace anacrowd {

// Base class for every error the library raises on bad input.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed record in one of the line-oriented file formats.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Well-formed input that violates a domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Inconsistent references between structures (unknown ids, key mismatch).
class StructuralError : public Error {
 public:
  using Error::Error;
};

// Unusable configuration or a run that cannot start from the given data.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace anacrowd
