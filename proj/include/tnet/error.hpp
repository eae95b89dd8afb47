#pragma once

#include <stdexcept>
#include <string>

namespace tnet {

/// Evaluation outside a path's or profile's time support.
class OutOfRangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Malformed arguments (grid mismatch, wrong dimension, unsupported topology).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input violates an operation's precondition, e.g. a netput with x(t0) < 0.
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Fixed-point iteration failed to reach its tolerance.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, double residual)
      : std::runtime_error(what + " (residual " + std::to_string(residual) + ")"),
        residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// A conditional variance in the bridge recursion went negative beyond tolerance.
class CovarianceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Spec file could not be parsed or failed validation.
class SpecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operation not defined for this input (e.g. workload under time-varying rates).
class NotSupportedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tnet
