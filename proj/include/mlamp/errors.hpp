#pragma once

#include <stdexcept>
#include <string>

namespace mlamp {

/// Invalid model, solver or experiment configuration.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Input outside the domain where a scalar function is defined
/// (non-positive variance, precision too negative for a Gaussian prior).
class DomainError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Non-finite value produced or received.
class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// The quadrature oracle failed to reach its tolerance.
class OracleError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace mlamp
