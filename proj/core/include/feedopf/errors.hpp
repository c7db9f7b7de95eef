#pragma once

#include <stdexcept>
#include <string>

namespace feedopf {

/// Invalid network/topology data (disconnected feeder, zero-impedance line, ...).
struct ModelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or scenario input.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// An iterative routine exhausted its iteration budget.
struct ConvergenceError : std::runtime_error {
  double residual;
  ConvergenceError(const std::string& what, double residual_)
      : std::runtime_error(what + " (residual " + std::to_string(residual_) + ")"),
        residual(residual_) {}
};

/// NaN/Inf or eigensolver breakdown.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A caller violated a documented precondition.
struct ContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};

}  // namespace feedopf
