#include "mpcgrad/invariant.hpp"

#include "mpcgrad/errors.hpp"

#include <numeric>
#include <sstream>

namespace mpcgrad {

HPolytope pre_set(const HPolytope& S, const Matrix& A, const Matrix& B, const HPolytope& U,
                  const GeometryTolerances& tol) {
  const auto n = A.rows();
  const auto m = B.cols();
  if (A.cols() != n || B.rows() != n || S.dim() != n || U.dim() != m)
    throw ArgumentError("pre_set: inconsistent dimensions");

  // Lifted set in (x, u): S.C (A x + B u) <= S.d and U.C u <= U.d.
  Matrix C = Matrix::Zero(S.rows() + U.rows(), n + m);
  Vector d(S.rows() + U.rows());
  C.topLeftCorner(S.rows(), n) = S.C() * A;
  C.topRightCorner(S.rows(), m) = S.C() * B;
  C.bottomRightCorner(U.rows(), m) = U.C();
  d << S.d(), U.d();

  // Rows with no dependence on (x, u) only decide emptiness.
  std::vector<Eigen::Index> live;
  for (Eigen::Index i = 0; i < C.rows(); ++i) {
    if (C.row(i).norm() > 1e-12) {
      live.push_back(i);
    } else if (d(i) < -tol.feasibility) {
      return HPolytope::empty(static_cast<int>(n));
    }
  }
  if (live.empty()) return HPolytope::universe(static_cast<int>(n));
  Matrix Cl(static_cast<Eigen::Index>(live.size()), n + m);
  Vector dl(static_cast<Eigen::Index>(live.size()));
  for (std::size_t k = 0; k < live.size(); ++k) {
    Cl.row(static_cast<Eigen::Index>(k)) = C.row(live[k]);
    dl(static_cast<Eigen::Index>(k)) = d(live[k]);
  }

  std::vector<int> keep(static_cast<std::size_t>(n));
  std::iota(keep.begin(), keep.end(), 0);
  return project(HPolytope(Cl, dl), keep, tol);
}

InvariantResult max_control_invariant(const HPolytope& X, const HPolytope& U, const Matrix& A,
                                      const Matrix& B, int max_iter,
                                      const GeometryTolerances& tol) {
  InvariantResult result;
  HPolytope omega = remove_redundant(X, tol);
  for (int k = 1; k <= max_iter; ++k) {
    HPolytope next = intersect(pre_set(omega, A, B, U, tol), X, tol);
    if (!is_feasible(next, tol)) {
      std::ostringstream os;
      os << "max_control_invariant: iterate " << k << " is empty; no control invariant subset";
      throw GeometryError(os.str());
    }
    if (!is_subset(next, omega, tol)) {
      std::ostringstream os;
      os << "max_control_invariant: iterate " << k << " is not contained in its predecessor";
      throw GeometryError(os.str());
    }
    result.iterations = k;
    result.log.push_back({k, next.rows()});
    const bool fixed = is_subset(omega, next, tol);
    omega = std::move(next);
    if (fixed) {
      result.converged = true;
      break;
    }
  }
  result.c_inf = std::move(omega);
  return result;
}

}  // namespace mpcgrad
