#pragma once

#include <stdexcept>
#include <string>

namespace weaksep {

/// Bad command-line usage. Maps to exit code 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Missing, unreadable or inconsistent input data. Maps to exit code 2.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Non-finite loss or gradient during optimization. Maps to exit code 3.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Tensor or grid dimensions that do not line up.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

}  // namespace weaksep
