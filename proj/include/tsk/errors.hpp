// Exception taxonomy for the library. Every condition the library detects is
// reported through one of these types so callers (and the CLI) can map
// failures to stable exit codes without string matching.

#pragma once

#include <stdexcept>
#include <string>

namespace tsk {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Operand shapes are mismatched or unsupported (e.g. a transform applied to a
// vector of the wrong length, or a length that must be a power of two).
class ShapeError : public Error {
 public:
  using Error::Error;
};

// An argument lies outside the mathematical domain of the operation
// (NaN input, zero-norm vector where a direction is required, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Wrong number of operands passed to a variadic operation.
class ArityError : public Error {
 public:
  using Error::Error;
};

// Malformed text or binary input.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Inconsistent or out-of-range configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Numeric failure at runtime: non-finite intermediate, factorization
// breakdown, root-finding that cannot bracket, and the like.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace tsk
