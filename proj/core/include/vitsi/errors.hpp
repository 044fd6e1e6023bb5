#pragma once

#include <stdexcept>
#include <string>

namespace vitsi {

/// Argument outside the mathematical domain of an operation
/// (division by zero, sqrt of a negative value, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Inconsistent shapes or architecture parameters.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Empty or full attention region, or a truncation region without mass.
/// The hypothesis is undefined for these; callers report the test as skipped.
class DegenerateRegionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Covariance that is not symmetric positive definite.
class CovarianceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or truncated weight file.
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed text input (images, CSV).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The observed statistic fell outside its own truncation region. Only a
/// nondeterministic model can trigger this.
class ConsistencyError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace vitsi
