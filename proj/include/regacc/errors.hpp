#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace regacc {

/// Argument outside the documented domain of an operation (time outside a
/// piece, negative speed, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Invalid arguments that are not a domain violation (empty sample sets,
/// non-positive gains).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An object could not be built because its invariants do not hold.
class ConstructionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The input coefficient of the highest-order barrier derivative vanished.
class DegenerateConstraintError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Query time not covered by a signal's broadcast timing.
class HorizonError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// Ego position beyond the last stop line.
class PastLastSignalError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// A barrier that must be positive at a switching instant was not.
class StateOutsideSafeSetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, std::size_t step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// Scenario file is malformed or contains unknown keys.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace regacc
