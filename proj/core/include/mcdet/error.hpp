#pragma once

#include <stdexcept>
#include <string>

namespace mcdet {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad user input: missing files, misaligned sequences, invalid arguments.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent configuration: layer tables, config files, missing weights.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Corrupt or unsupported file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Broken internal invariant. Indicates a bug rather than bad input.
class InternalError : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf appeared where finite values are required.
class NumericError : public InternalError {
 public:
  using InternalError::InternalError;
};

}  // namespace mcdet
