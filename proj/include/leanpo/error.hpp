#pragma once

#include <stdexcept>
#include <string>

namespace leanpo {

// Raised for precondition violations on public operations.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when training produces a non-finite loss.
class NumericAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace leanpo
