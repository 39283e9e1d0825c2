#pragma once
#include <stdexcept>
#include <string>

namespace twophase {

// Error taxonomy mirrors the CLI exit codes: usage -> 2, data -> 3, numerical -> 4.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace twophase
