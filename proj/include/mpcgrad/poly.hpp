#pragma once

#include <Eigen/Dense>

#include <vector>

namespace mpcgrad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Tolerances shared by the polytope routines.
struct GeometryTolerances {
  double geometric = 1e-7;   ///< redundancy, subset and fixed-point tests
  double feasibility = 1e-8; ///< LP phase-one residual
  std::size_t fm_row_cap = 10000;
};

/**
 * Halfspace representation {x : C x <= d}.
 *
 * Rows are scaled to unit Euclidean norm on construction. A polytope with
 * zero rows is the whole space of its dimension.
 */
class HPolytope {
 public:
  HPolytope() = default;

  /// Throws ArgumentError on mismatched row counts or zero-norm rows.
  HPolytope(Matrix C, Vector d);

  /// Whole space R^dim.
  static HPolytope universe(int dim);
  /// Canonical empty set in R^dim.
  static HPolytope empty(int dim);
  /// Axis-aligned box lower <= x <= upper.
  static HPolytope box(const Vector& lower, const Vector& upper);

  const Matrix& C() const { return C_; }
  const Vector& d() const { return d_; }
  int dim() const { return dim_; }
  int rows() const { return static_cast<int>(d_.size()); }

 private:
  Matrix C_;
  Vector d_;
  int dim_ = 0;
};

enum class LpStatus { Optimal, Infeasible, Unbounded };
enum class Sense { Max, Min };

struct LpOutcome {
  LpStatus status = LpStatus::Infeasible;
  Vector point;
  double value = 0.0;
};

/**
 * Dense two-phase simplex over free variables, Bland's rule throughout.
 *
 * Rows of C may have any scaling (including zero rows); this is the kernel
 * behind lp_solve and the QP phase-one search.
 */
LpOutcome solve_lp(const Matrix& C, const Vector& d, const Vector& objective, Sense sense,
                   double feas_tol = 1e-8);

/// Optimizes objective over P. Throws ArgumentError on dimension mismatch.
LpOutcome lp_solve(const Vector& objective, const HPolytope& P, Sense sense,
                   const GeometryTolerances& tol = {});

bool is_feasible(const HPolytope& P, const GeometryTolerances& tol = {});

/// C x <= d + tol componentwise.
bool contains(const HPolytope& P, const Vector& x, double tol = 1e-9);

/// P subset of Q. P empty is vacuously true; an unbounded row LP throws GeometryError.
bool is_subset(const HPolytope& P, const HPolytope& Q, const GeometryTolerances& tol = {});

/// Drops rows implied by the others. Throws GeometryError when P is empty.
HPolytope remove_redundant(const HPolytope& P, const GeometryTolerances& tol = {});

/**
 * Shadow of P on the coordinates in `keep` (ascending order in the result)
 * by Fourier-Motzkin elimination, pruning redundant rows after each step.
 * Empty input yields HPolytope::empty. Throws ResourceError past the row cap.
 */
HPolytope project(const HPolytope& P, const std::vector<int>& keep,
                  const GeometryTolerances& tol = {});

/// Stacked rows, pruned when the result is nonempty.
HPolytope intersect(const HPolytope& P, const HPolytope& Q, const GeometryTolerances& tol = {});

struct ChebyshevBall {
  Vector center;
  double radius = 0.0;
  bool flat = false;  ///< radius is (numerically) zero
};

/// Largest inscribed ball. Throws GeometryError for empty or unbounded P.
ChebyshevBall chebyshev_center(const HPolytope& P, const GeometryTolerances& tol = {});

}  // namespace mpcgrad
