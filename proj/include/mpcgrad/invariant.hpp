#pragma once

#include "mpcgrad/poly.hpp"

#include <vector>

namespace mpcgrad {

/// {x : exists u in U with A x + B u in S}
HPolytope pre_set(const HPolytope& S, const Matrix& A, const Matrix& B, const HPolytope& U,
                  const GeometryTolerances& tol = {});

struct InvariantIteration {
  int iteration = 0;
  int rows = 0;
};

struct InvariantResult {
  HPolytope c_inf;
  int iterations = 0;
  bool converged = false;
  std::vector<InvariantIteration> log;
};

/**
 * Maximal control invariant subset of X: Omega_0 = X,
 * Omega_{k+1} = Pre(Omega_k) intersected with X, until two consecutive
 * iterates contain each other at tol.geometric.
 *
 * Throws GeometryError if an iterate becomes empty or if the decreasing
 * chain property is violated.
 */
InvariantResult max_control_invariant(const HPolytope& X, const HPolytope& U, const Matrix& A,
                                      const Matrix& B, int max_iter = 100,
                                      const GeometryTolerances& tol = {});

}  // namespace mpcgrad
