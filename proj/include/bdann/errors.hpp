#pragma once

#include <stdexcept>
#include <string>

namespace bdann {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand dimensions disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A non-finite value appeared; the message carries the parameter path.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument or precondition violation on user-supplied input.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent dataset content.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Configuration validation failure; the message names the field path.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Training diverged (non-finite loss).
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace bdann
