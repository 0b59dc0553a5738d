#pragma once

#include <stdexcept>
#include <string>

namespace qsmlab {

// Exception hierarchy. The CLI maps each family onto a process exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration, spec or argument values (exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Shape or dimension contract violated.
class DimensionError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// NaN, divergence or breakdown inside a numerical routine (exit code 3).
class NumericalError : public Error {
 public:
  using Error::Error;
};

// File system or format failures (exit code 4).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace qsmlab
