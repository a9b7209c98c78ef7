#pragma once

#include "mpcgrad/poly.hpp"

#include <functional>
#include <vector>

namespace mpcgrad {

/// x(k+1) = A x(k) + B u(k)
struct LinearSystem {
  Matrix A;
  Matrix B;

  int state_dim() const { return static_cast<int>(A.rows()); }
  int input_dim() const { return static_cast<int>(B.cols()); }
};

/**
 * Finite-horizon constrained LQ problem
 *
 *   min  x(N)' QN x(N) + sum_{k<N} x(k)' Q x(k) + u(k)' R u(k)
 *   s.t. dynamics, x(k) in X for k = 1..N, u(k) in U for k = 0..N-1.
 */
struct MpcProblem {
  LinearSystem system;
  Matrix Q;
  Matrix R;
  Matrix QN;
  int horizon = 1;
  HPolytope X;
  HPolytope U;

  int state_dim() const { return system.state_dim(); }
  int input_dim() const { return system.input_dim(); }

  /// Throws ArgumentError on inconsistent shapes or non-(semi)definite weights.
  void validate() const;
};

/**
 * Dense QP in the stacked input sequence U = (u(0), ..., u(N-1)):
 *
 *   min_U  1/2 U' H U + x' F U   s.t.  G U <= w + S x.
 *
 * H and F are half the Hessian and cross term of the horizon cost, so the
 * horizon cost equals U' H U + 2 x' F U plus a term independent of U.
 */
struct CondensedQp {
  Matrix H;  // Nm x Nm
  Matrix F;  // n x Nm
  Matrix G;
  Vector w;
  Matrix S;
  int state_dim = 0;
  int input_dim = 0;
  int horizon = 0;

  int variables() const { return static_cast<int>(H.rows()); }
  int constraints() const { return static_cast<int>(G.rows()); }
};

enum class QpStatus { Optimal, Infeasible };

struct QpOptions {
  double act_tol = 1e-7;
  double feas_tol = 1e-8;
  int iter_factor = 100;  ///< iteration cap is iter_factor * constraints
};

struct ControlSolution {
  QpStatus status = QpStatus::Infeasible;
  Vector u_seq;
  Vector u0;
  std::vector<int> active_set;  ///< ascending constraint indices
  Vector multipliers;           ///< one entry per constraint row, zero when inactive
  bool on_boundary = false;     ///< some active constraint has multiplier below act_tol
  int iterations = 0;
};

Vector simulate_step(const LinearSystem& system, const Vector& x, const Vector& u);

CondensedQp condense(const MpcProblem& problem);

/// Primal active-set solve. Throws SolverError past the iteration cap.
ControlSolution qp_solve(const CondensedQp& qp, const Vector& x, const QpOptions& opts = {});

/// First input of the optimal sequence. Throws InfeasibleError.
Vector control_law(const CondensedQp& qp, const Vector& x, const QpOptions& opts = {});

/// d u0 / d x (m x n) from the KKT system of the active set in `sol`.
/// Throws DegeneracyError when that KKT matrix is singular.
Matrix sensitivity(const CondensedQp& qp, const ControlSolution& sol, const Vector& x);

using Controller = std::function<Vector(const Vector&)>;

struct Trajectory {
  std::vector<Vector> states;  ///< steps + 1 entries, states[0] = x0
  std::vector<Vector> inputs;  ///< steps entries
};

Trajectory closed_loop(const LinearSystem& system, const Controller& controller, const Vector& x0,
                       int steps);

/// Steps k where u(k) leaves U or x(k+1) leaves X.
int count_violations(const Trajectory& traj, const MpcProblem& problem, double tol = 1e-7);

/// KKT residuals of an Optimal solution.
struct KktResiduals {
  double stationarity = 0.0;
  double primal = 0.0;
  double complementarity = 0.0;
  double min_multiplier = 0.0;
};

KktResiduals kkt_residuals(const CondensedQp& qp, const ControlSolution& sol, const Vector& x);

}  // namespace mpcgrad
