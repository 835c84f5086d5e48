#pragma once

#include <stdexcept>
#include <string>

namespace panelsvd {

/// Bad input: shapes, ranges, non-finite entries. Maps to CLI exit code 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Inconsistent or unknown configuration (also exit code 1).
class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// A generation request that cannot be met under its own constraints.
class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ValidationError(message);
}

}  // namespace panelsvd
