#pragma once

#include <stdexcept>
#include <string>

namespace s2s {

// Bad flags, bad config keys, bad call arguments.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent files and records.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values in a computation.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace s2s
