#include "mpcgrad/mpc.hpp"

#include "mpcgrad/errors.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace mpcgrad {

namespace {

constexpr double kZeroRow = 1e-12;
constexpr double kDualTol = 1e-10;

void check_symmetric(const Matrix& M, const char* name, double min_eig, bool strict) {
  if (M.rows() != M.cols()) throw ArgumentError(std::string(name) + " must be square");
  if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-9)
    throw ArgumentError(std::string(name) + " must be symmetric");
  const double lo = Eigen::SelfAdjointEigenSolver<Matrix>(M).eigenvalues().minCoeff();
  if (strict ? !(lo > min_eig) : !(lo >= min_eig)) {
    std::ostringstream os;
    os << name << " has minimum eigenvalue " << lo << (strict ? "; must be positive definite"
                                                               : "; must be positive semidefinite");
    throw ArgumentError(os.str());
  }
}

std::string format_state(const Vector& x) {
  std::ostringstream os;
  os.precision(17);
  os << "(";
  for (Eigen::Index i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x(i);
  os << ")";
  return os.str();
}

Matrix rows_of(const Matrix& M, const std::vector<int>& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), M.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = M.row(idx[k]);
  return out;
}

bool rows_independent(const Matrix& rows) {
  if (rows.rows() == 0) return true;
  if (rows.rows() > rows.cols()) return false;
  Eigen::ColPivHouseholderQR<Matrix> qr(rows.transpose());
  qr.setThreshold(1e-9);
  return qr.rank() == rows.rows();
}

}  // namespace

void MpcProblem::validate() const {
  const auto n = system.A.rows();
  if (n < 1 || system.A.cols() != n) throw ArgumentError("A must be square with n >= 1");
  if (system.B.rows() != n || system.B.cols() < 1) {
    std::ostringstream os;
    os << "B must be " << n << " x m with m >= 1, got " << system.B.rows() << " x "
       << system.B.cols();
    throw ArgumentError(os.str());
  }
  const auto m = system.B.cols();
  if (Q.rows() != n || QN.rows() != n) throw ArgumentError("Q and QN must be n x n");
  if (R.rows() != m) throw ArgumentError("R must be m x m");
  check_symmetric(Q, "Q", -1e-9, false);
  check_symmetric(QN, "QN", -1e-9, false);
  check_symmetric(R, "R", 1e-9, true);
  if (horizon < 1) throw ArgumentError("horizon N must be >= 1");
  if (X.dim() != n) throw ArgumentError("state set X has the wrong dimension");
  if (U.dim() != m) throw ArgumentError("input set U has the wrong dimension");
}

Vector simulate_step(const LinearSystem& system, const Vector& x, const Vector& u) {
  if (x.size() != system.A.cols() || u.size() != system.B.cols())
    throw ArgumentError("simulate_step: dimension mismatch");
  return system.A * x + system.B * u;
}

CondensedQp condense(const MpcProblem& p) {
  p.validate();
  const int n = p.state_dim();
  const int m = p.input_dim();
  const int N = p.horizon;
  const Matrix& A = p.system.A;
  const Matrix& B = p.system.B;

  // Stacked prediction (x(1..N)) = Phi x + Gamma U.
  Matrix Phi(N * n, n);
  Matrix Gamma = Matrix::Zero(N * n, N * m);
  Matrix Apow = Matrix::Identity(n, n);
  std::vector<Matrix> powers;  // A^0 .. A^{N-1}
  for (int k = 0; k < N; ++k) {
    powers.push_back(Apow);
    Apow = A * Apow;
    Phi.block(k * n, 0, n, n) = Apow;
  }
  for (int k = 1; k <= N; ++k)
    for (int j = 0; j < k; ++j) Gamma.block((k - 1) * n, j * m, n, m) = powers[k - 1 - j] * B;

  Matrix Qbar = Matrix::Zero(N * n, N * n);
  for (int k = 0; k < N; ++k) Qbar.block(k * n, k * n, n, n) = (k == N - 1) ? p.QN : p.Q;
  Matrix Rbar = Matrix::Zero(N * m, N * m);
  for (int k = 0; k < N; ++k) Rbar.block(k * m, k * m, m, m) = p.R;

  CondensedQp qp;
  qp.state_dim = n;
  qp.input_dim = m;
  qp.horizon = N;
  qp.H = Gamma.transpose() * Qbar * Gamma + Rbar;
  qp.H = 0.5 * (qp.H + qp.H.transpose()).eval();
  qp.F = Phi.transpose() * Qbar * Gamma;

  const int ru = p.U.rows();
  const int rx = p.X.rows();
  const int rows = N * (ru + rx);
  qp.G = Matrix::Zero(rows, N * m);
  qp.w = Vector::Zero(rows);
  qp.S = Matrix::Zero(rows, n);
  int r = 0;
  for (int k = 0; k < N; ++k) {
    qp.G.block(r, k * m, ru, m) = p.U.C();
    qp.w.segment(r, ru) = p.U.d();
    r += ru;
  }
  for (int k = 1; k <= N; ++k) {
    qp.G.block(r, 0, rx, N * m) = p.X.C() * Gamma.middleRows((k - 1) * n, n);
    qp.w.segment(r, rx) = p.X.d();
    qp.S.block(r, 0, rx, n) = -p.X.C() * Phi.middleRows((k - 1) * n, n);
    r += rx;
  }
  return qp;
}

ControlSolution qp_solve(const CondensedQp& qp, const Vector& x, const QpOptions& opts) {
  if (x.size() != qp.state_dim) throw ArgumentError("qp_solve: state dimension mismatch");
  const int nv = qp.variables();
  const int rows = qp.constraints();
  const Vector rhs = qp.w + qp.S * x;
  const Vector lin = qp.F.transpose() * x;

  ControlSolution sol;
  std::vector<char> structural(static_cast<std::size_t>(rows), 1);
  for (int i = 0; i < rows; ++i) {
    if (qp.G.row(i).norm() <= kZeroRow) {
      structural[static_cast<std::size_t>(i)] = 0;
      if (rhs(i) < -opts.feas_tol) return sol;
    }
  }

  const Eigen::LLT<Matrix> hchol(qp.H);
  if (hchol.info() != Eigen::Success) throw ArgumentError("qp_solve: H is not positive definite");

  auto feasible = [&](const Vector& U) {
    const Vector slack = rhs - qp.G * U;
    for (int i = 0; i < rows; ++i)
      if (structural[static_cast<std::size_t>(i)] && slack(i) < -opts.feas_tol) return false;
    return true;
  };

  Vector U = -hchol.solve(lin);
  if (!feasible(U)) {
    const LpOutcome start = solve_lp(qp.G, rhs, Vector::Zero(nv), Sense::Max, opts.feas_tol);
    if (start.status == LpStatus::Infeasible) return sol;
    U = start.point;
  }

  std::vector<int> working;
  Vector lambda;
  const int cap = std::max(100, opts.iter_factor * rows);
  bool done = false;
  for (int iter = 0; iter < cap; ++iter) {
    sol.iterations = iter + 1;
    const Vector g = qp.H * U + lin;
    Vector p;
    const Matrix GW = rows_of(qp.G, working);
    const Vector Hg = hchol.solve(g);
    if (working.empty()) {
      lambda.resize(0);
      p = -Hg;
    } else {
      const Matrix HGt = hchol.solve(GW.transpose());
      const Matrix schur = GW * HGt;
      lambda = schur.ldlt().solve(-GW * Hg);
      p = -Hg - HGt * lambda;
    }

    if (p.lpNorm<Eigen::Infinity>() <= 1e-12 * (1.0 + U.lpNorm<Eigen::Infinity>())) {
      int drop = -1;
      double most_negative = -kDualTol;
      for (std::size_t k = 0; k < working.size(); ++k) {
        const double l = lambda(static_cast<Eigen::Index>(k));
        if (l < most_negative) {
          most_negative = l;
          drop = static_cast<int>(k);
        }
      }
      if (drop < 0) {
        done = true;
        break;
      }
      working.erase(working.begin() + drop);
      continue;
    }

    double alpha = 1.0;
    int blocking = -1;
    const double pscale = 1e-14 * p.norm();
    for (int i = 0; i < rows; ++i) {
      if (!structural[static_cast<std::size_t>(i)]) continue;
      if (std::find(working.begin(), working.end(), i) != working.end()) continue;
      const double a = qp.G.row(i).dot(p);
      if (a <= pscale) continue;
      const double ratio = std::max(rhs(i) - qp.G.row(i).dot(U), 0.0) / a;
      if (ratio < alpha) {
        alpha = ratio;
        blocking = i;
      }
    }
    U += alpha * p;
    if (blocking >= 0) {
      working.insert(std::upper_bound(working.begin(), working.end(), blocking), blocking);
    }
  }
  if (!done) {
    std::ostringstream os;
    os << "qp_solve: active-set iteration cap (" << cap << ") exceeded at x = " << format_state(x);
    throw SolverError(os.str());
  }

  sol.status = QpStatus::Optimal;
  sol.u_seq = U;
  sol.u0 = U.head(qp.input_dim);
  sol.multipliers = Vector::Zero(rows);
  for (std::size_t k = 0; k < working.size(); ++k)
    sol.multipliers(working[k]) = std::max(lambda(static_cast<Eigen::Index>(k)), 0.0);

  // Weakly active rows join the active set when they keep the rows independent.
  std::vector<int> active = working;
  const Vector slack = rhs - qp.G * U;
  for (int i = 0; i < rows; ++i) {
    if (!structural[static_cast<std::size_t>(i)]) continue;
    if (std::find(working.begin(), working.end(), i) != working.end()) continue;
    if (slack(i) >= opts.act_tol) continue;
    std::vector<int> trial = active;
    trial.insert(std::upper_bound(trial.begin(), trial.end(), i), i);
    if (rows_independent(rows_of(qp.G, trial))) active = std::move(trial);
    sol.on_boundary = true;
  }
  for (int i : working)
    if (sol.multipliers(i) < opts.act_tol) sol.on_boundary = true;
  sol.active_set = std::move(active);
  return sol;
}

Vector control_law(const CondensedQp& qp, const Vector& x, const QpOptions& opts) {
  const ControlSolution sol = qp_solve(qp, x, opts);
  if (sol.status != QpStatus::Optimal)
    throw InfeasibleError("control_law: MPC problem infeasible at x = " + format_state(x));
  return sol.u0;
}

Matrix sensitivity(const CondensedQp& qp, const ControlSolution& sol, const Vector& x) {
  if (sol.status != QpStatus::Optimal)
    throw ArgumentError("sensitivity: solution is not optimal");
  if (x.size() != qp.state_dim) throw ArgumentError("sensitivity: state dimension mismatch");
  const int nv = qp.variables();
  const int na = static_cast<int>(sol.active_set.size());
  const int n = qp.state_dim;

  Matrix K = Matrix::Zero(nv + na, nv + na);
  Matrix rhs = Matrix::Zero(nv + na, n);
  const Matrix GA = rows_of(qp.G, sol.active_set);
  K.topLeftCorner(nv, nv) = qp.H;
  K.topRightCorner(nv, na) = GA.transpose();
  K.bottomLeftCorner(na, nv) = GA;
  rhs.topRows(nv) = -qp.F.transpose();
  rhs.bottomRows(na) = rows_of(qp.S, sol.active_set);

  Eigen::FullPivLU<Matrix> lu(K);
  lu.setThreshold(1e-10);
  if (!lu.isInvertible()) {
    std::ostringstream os;
    os << "sensitivity: singular KKT matrix for active set {";
    for (int k = 0; k < na; ++k) os << (k ? ", " : "") << sol.active_set[static_cast<std::size_t>(k)];
    os << "}";
    throw DegeneracyError(os.str(), sol.active_set);
  }
  const Matrix dz = lu.solve(rhs);
  return dz.topRows(qp.input_dim);
}

Trajectory closed_loop(const LinearSystem& system, const Controller& controller, const Vector& x0,
                       int steps) {
  Trajectory traj;
  traj.states.reserve(static_cast<std::size_t>(steps) + 1);
  traj.inputs.reserve(static_cast<std::size_t>(steps));
  traj.states.push_back(x0);
  for (int k = 0; k < steps; ++k) {
    const Vector& x = traj.states.back();
    Vector u = controller(x);
    Vector next = simulate_step(system, x, u);
    traj.inputs.push_back(std::move(u));
    traj.states.push_back(std::move(next));
  }
  return traj;
}

int count_violations(const Trajectory& traj, const MpcProblem& problem, double tol) {
  int count = 0;
  for (std::size_t k = 0; k < traj.inputs.size(); ++k) {
    if (!contains(problem.U, traj.inputs[k], tol) || !contains(problem.X, traj.states[k + 1], tol))
      ++count;
  }
  return count;
}

KktResiduals kkt_residuals(const CondensedQp& qp, const ControlSolution& sol, const Vector& x) {
  KktResiduals r;
  const Vector& lambda = sol.multipliers;
  r.stationarity =
      (qp.H * sol.u_seq + qp.F.transpose() * x + qp.G.transpose() * lambda).lpNorm<Eigen::Infinity>();
  if (qp.constraints() == 0) return r;
  const Vector slack = qp.w + qp.S * x - qp.G * sol.u_seq;
  r.primal = std::max(0.0, -slack.minCoeff());
  r.complementarity = lambda.cwiseProduct(slack).cwiseAbs().maxCoeff();
  r.min_multiplier = lambda.minCoeff();
  return r;
}

}  // namespace mpcgrad
