#pragma once

#include <stdexcept>
#include <string>

namespace fbsp {

/// Input violates a precondition (bad parameter, shape mismatch, bad file).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Computation hit a numerical failure (singularity, divergence).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fbsp
