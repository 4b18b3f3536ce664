#pragma once

#include <stdexcept>
#include <string>

namespace mgca {

// Typed exceptions so tests and callers can tell apart shape bugs,
// violated call contracts, bad configuration, and runtime blowups.

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ContractError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct VocabError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Non-finite values encountered during training (loss or gradients).
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numerical instability outside of training, e.g. a finite-difference
// probe driving the loss to NaN.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace mgca
