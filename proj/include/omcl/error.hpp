#pragma once

#include <stdexcept>
#include <string>

namespace omcl {

// Base class for toolkit errors. The CLI maps each subclass to an exit code:
// ConfigError -> 1, DataError -> 2, NumericError -> 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Operator/shape contract violations (wrong rank, incompatible dims).
struct ShapeError : Error {
  using Error::Error;
};

// Malformed or missing input files, bad dataset contents.
struct DataError : Error {
  using Error::Error;
};

// NaN/Inf encountered where a finite value is required.
struct NumericError : Error {
  using Error::Error;
};

// Invalid configuration or command-line usage.
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace omcl
