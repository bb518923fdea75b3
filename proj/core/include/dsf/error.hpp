#pragma once

#include <stdexcept>
#include <string>

namespace dsf {

// Bad shapes, bad arguments, violated preconditions.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Unreadable, malformed or inconsistent input files (corpora, configs,
// checkpoints).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// NaN/Inf reached a place where it must not (loss, gradients, tensors).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid command-line or configuration usage.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace dsf
