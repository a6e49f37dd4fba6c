#pragma once

#include <stdexcept>
#include <string>

namespace mambadm {

// Numeric inputs violate an operation's preconditions (non-finite values,
// non-positive step sizes, empty state vectors, ...).
struct InvalidParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Sequence / matrix dimensions do not agree.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Malformed or out-of-range data: broken archives, actions outside the
// manifest's action space, unreadable files.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Unusable configuration: unknown variant names, mismatched action spaces,
// inconsistent sweep settings.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Math domain violations (log of a zero entry, degenerate normalization).
struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training aborted (non-finite loss and similar unrecoverable states).
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace mambadm
