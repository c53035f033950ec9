#pragma once

#include <stdexcept>
#include <string>

namespace lexpol {

/// Tensor/argument dimension mismatch.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// API used out of order (e.g. backward before forward).
struct StateError : std::logic_error {
  using std::logic_error::logic_error;
};

/// Non-finite values where finite math was required. CLI exit code 3.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or incompatible checkpoint. CLI exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// File read/write failure. CLI exit code 4.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace lexpol
