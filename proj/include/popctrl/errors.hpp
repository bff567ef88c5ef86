#pragma once

#include <stdexcept>
#include <string>

namespace popctrl {

/// Base class of every error raised by the library. The CLI maps any
/// `Error` to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent configuration (scenario files, grid targets,
/// unsupported model forms).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// An argument lies outside the mathematical domain of the operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Array or field sizes do not match the grid they are used with.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values produced while stepping a solver.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, int step)
      : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}

  int step() const noexcept { return step_; }

 private:
  int step_;
};

/// Inputs that must agree with each other (e.g. the frozen trace used by a
/// forward solve and by its adjoint) do not.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

}  // namespace popctrl
