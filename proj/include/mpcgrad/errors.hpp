#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace mpcgrad {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dimension mismatch or otherwise malformed arguments.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// A geometric precondition failed (unbounded direction, empty set, ...).
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// A configured resource cap was exceeded.
class ResourceError : public Error {
 public:
  using Error::Error;
};

/// The MPC problem has no feasible input sequence for the given state.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

/// The iterative solver did not terminate within its iteration cap.
class SolverError : public Error {
 public:
  using Error::Error;
};

/// Singular KKT matrix for the given active set.
class DegeneracyError : public Error {
 public:
  DegeneracyError(const std::string& what, std::vector<int> active_set)
      : Error(what), active_set_(std::move(active_set)) {}

  const std::vector<int>& active_set() const { return active_set_; }

 private:
  std::vector<int> active_set_;
};

/// Malformed file or configuration.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// An artifact was produced for a different MPC problem.
class HashMismatchError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values during training or evaluation.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace mpcgrad
