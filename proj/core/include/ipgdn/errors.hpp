#pragma once

#include <stdexcept>
#include <string>

namespace ipgdn {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor/matrix dimensions. Raised at operation time.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value (rates, probabilities, counts, unknown keys).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent data (bad file contents, bad ids, bad masks).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Filesystem-level failure; the message names the offending path.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Training diverged or could not proceed.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace ipgdn
