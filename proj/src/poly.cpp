#include "mpcgrad/poly.hpp"

#include "mpcgrad/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace mpcgrad {

namespace {

constexpr double kZeroRow = 1e-12;
constexpr double kPivotEps = 1e-11;
constexpr double kCostEps = 1e-10;
constexpr int kSimplexIterCap = 100000;

// Maximize cost . z subject to T z = b, z >= 0, starting from the given basis.
// Returns false when the objective is unbounded along an entering column.
bool run_simplex(Matrix& T, Vector& b, std::vector<int>& basis, const Vector& cost) {
  const Eigen::Index m = T.rows();
  const Eigen::Index nv = T.cols();
  std::vector<char> is_basic(static_cast<std::size_t>(nv), 0);
  for (int j : basis) is_basic[static_cast<std::size_t>(j)] = 1;

  for (int iter = 0; iter < kSimplexIterCap; ++iter) {
    // Bland: lowest-index improving column.
    Eigen::Index entering = -1;
    for (Eigen::Index j = 0; j < nv; ++j) {
      if (is_basic[static_cast<std::size_t>(j)]) continue;
      double reduced = cost(j);
      for (Eigen::Index i = 0; i < m; ++i) reduced -= cost(basis[static_cast<std::size_t>(i)]) * T(i, j);
      if (reduced > kCostEps) {
        entering = j;
        break;
      }
    }
    if (entering < 0) return true;

    Eigen::Index leaving = -1;
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < m; ++i) {
      const double a = T(i, entering);
      if (a <= kPivotEps) continue;
      const double ratio = std::max(b(i), 0.0) / a;
      if (leaving < 0) {
        best = ratio;
        leaving = i;
        continue;
      }
      const double slack = 1e-12 * (1.0 + std::abs(best));
      if (ratio < best - slack) {
        best = ratio;
        leaving = i;
      } else if (ratio <= best + slack &&
                 basis[static_cast<std::size_t>(i)] < basis[static_cast<std::size_t>(leaving)]) {
        leaving = i;
      }
    }
    if (leaving < 0) return false;

    const double piv = T(leaving, entering);
    T.row(leaving) /= piv;
    b(leaving) /= piv;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (i == leaving) continue;
      const double f = T(i, entering);
      if (f == 0.0) continue;
      T.row(i) -= f * T.row(leaving);
      b(i) -= f * b(leaving);
    }
    is_basic[static_cast<std::size_t>(basis[static_cast<std::size_t>(leaving)])] = 0;
    is_basic[static_cast<std::size_t>(entering)] = 1;
    basis[static_cast<std::size_t>(leaving)] = static_cast<int>(entering);
  }
  throw SolverError("simplex iteration cap exceeded");
}

void pivot(Matrix& T, Vector& b, Eigen::Index row, Eigen::Index col) {
  const double piv = T(row, col);
  T.row(row) /= piv;
  b(row) /= piv;
  for (Eigen::Index i = 0; i < T.rows(); ++i) {
    if (i == row) continue;
    const double f = T(i, col);
    if (f == 0.0) continue;
    T.row(i) -= f * T.row(row);
    b(i) -= f * b(row);
  }
}

}  // namespace

HPolytope::HPolytope(Matrix C, Vector d) : dim_(static_cast<int>(C.cols())) {
  if (C.rows() != d.size()) {
    std::ostringstream os;
    os << "HPolytope: C has " << C.rows() << " rows but d has " << d.size();
    throw ArgumentError(os.str());
  }
  for (Eigen::Index i = 0; i < C.rows(); ++i) {
    const double norm = C.row(i).norm();
    if (!(norm > kZeroRow)) {
      std::ostringstream os;
      os << "HPolytope: row " << i << " has zero norm";
      throw ArgumentError(os.str());
    }
    C.row(i) /= norm;
    d(i) /= norm;
  }
  C_ = std::move(C);
  d_ = std::move(d);
}

HPolytope HPolytope::universe(int dim) {
  HPolytope P;
  P.C_ = Matrix(0, dim);
  P.d_ = Vector(0);
  P.dim_ = dim;
  return P;
}

HPolytope HPolytope::empty(int dim) {
  Matrix C = Matrix::Zero(2, dim);
  C(0, 0) = 1.0;
  C(1, 0) = -1.0;
  return HPolytope(C, Vector::Constant(2, -1.0));
}

HPolytope HPolytope::box(const Vector& lower, const Vector& upper) {
  if (lower.size() != upper.size()) throw ArgumentError("box: bound dimensions differ");
  const Eigen::Index n = lower.size();
  Matrix C(2 * n, n);
  C << Matrix::Identity(n, n), -Matrix::Identity(n, n);
  Vector d(2 * n);
  d << upper, -lower;
  return HPolytope(C, d);
}

LpOutcome solve_lp(const Matrix& C, const Vector& d, const Vector& objective, Sense sense,
                   double feas_tol) {
  if (objective.size() != C.cols()) {
    std::ostringstream os;
    os << "lp: objective has dimension " << objective.size() << ", constraints have " << C.cols();
    throw ArgumentError(os.str());
  }
  if (C.rows() != d.size()) throw ArgumentError("lp: C and d row counts differ");

  const Eigen::Index n = C.cols();
  LpOutcome out;

  // Normalize rows; zero rows are pure feasibility checks.
  std::vector<Eigen::Index> live;
  Matrix Cn = C;
  Vector dn = d;
  for (Eigen::Index i = 0; i < C.rows(); ++i) {
    const double norm = C.row(i).norm();
    if (norm <= kZeroRow) {
      if (d(i) < -feas_tol) return out;
      continue;
    }
    Cn.row(i) /= norm;
    dn(i) /= norm;
    live.push_back(i);
  }

  const auto m = static_cast<Eigen::Index>(live.size());
  Eigen::Index n_art = 0;
  for (Eigen::Index i : live)
    if (dn(i) < 0.0) ++n_art;

  // Columns: x+ (n), x- (n), slack (m), artificial (n_art).
  const Eigen::Index n_struct = 2 * n + m;
  Matrix T = Matrix::Zero(m, n_struct + n_art);
  Vector b(m);
  std::vector<int> basis(static_cast<std::size_t>(m));
  Eigen::Index art = 0;
  for (Eigen::Index r = 0; r < m; ++r) {
    const Eigen::Index i = live[static_cast<std::size_t>(r)];
    const double sign = dn(i) < 0.0 ? -1.0 : 1.0;
    T.block(r, 0, 1, n) = sign * Cn.row(i);
    T.block(r, n, 1, n) = -sign * Cn.row(i);
    T(r, 2 * n + r) = sign;
    b(r) = sign * dn(i);
    if (sign < 0.0) {
      T(r, n_struct + art) = 1.0;
      basis[static_cast<std::size_t>(r)] = static_cast<int>(n_struct + art);
      ++art;
    } else {
      basis[static_cast<std::size_t>(r)] = static_cast<int>(2 * n + r);
    }
  }

  if (n_art > 0) {
    Vector cost = Vector::Zero(T.cols());
    cost.tail(n_art).setConstant(-1.0);
    run_simplex(T, b, basis, cost);
    double infeas = 0.0;
    for (Eigen::Index r = 0; r < m; ++r)
      if (basis[static_cast<std::size_t>(r)] >= n_struct) infeas += std::max(b(r), 0.0);
    if (infeas > feas_tol) return out;

    // Drive remaining artificials out of the basis; rows that cannot pivot are redundant.
    std::vector<Eigen::Index> keep_rows;
    for (Eigen::Index r = 0; r < m; ++r) {
      if (basis[static_cast<std::size_t>(r)] < n_struct) {
        keep_rows.push_back(r);
        continue;
      }
      Eigen::Index col = -1;
      for (Eigen::Index j = 0; j < n_struct; ++j) {
        if (std::abs(T(r, j)) > 1e-9 &&
            std::find(basis.begin(), basis.end(), static_cast<int>(j)) == basis.end()) {
          col = j;
          break;
        }
      }
      if (col >= 0) {
        b(r) = 0.0;
        pivot(T, b, r, col);
        basis[static_cast<std::size_t>(r)] = static_cast<int>(col);
        keep_rows.push_back(r);
      }
    }
    Matrix T2(static_cast<Eigen::Index>(keep_rows.size()), n_struct);
    Vector b2(static_cast<Eigen::Index>(keep_rows.size()));
    std::vector<int> basis2;
    for (std::size_t k = 0; k < keep_rows.size(); ++k) {
      const auto r = keep_rows[k];
      T2.row(static_cast<Eigen::Index>(k)) = T.block(r, 0, 1, n_struct);
      b2(static_cast<Eigen::Index>(k)) = b(r);
      basis2.push_back(basis[static_cast<std::size_t>(r)]);
    }
    T = std::move(T2);
    b = std::move(b2);
    basis = std::move(basis2);
  }

  const Vector c = sense == Sense::Max ? Vector(objective) : Vector(-objective);
  Vector cost = Vector::Zero(T.cols());
  cost.head(n) = c;
  cost.segment(n, n) = -c;
  if (!run_simplex(T, b, basis, cost)) {
    out.status = LpStatus::Unbounded;
    return out;
  }

  Vector z = Vector::Zero(T.cols());
  for (std::size_t r = 0; r < basis.size(); ++r) z(basis[r]) = b(static_cast<Eigen::Index>(r));
  out.status = LpStatus::Optimal;
  out.point = z.head(n) - z.segment(n, n);
  out.value = objective.dot(out.point);
  return out;
}

LpOutcome lp_solve(const Vector& objective, const HPolytope& P, Sense sense,
                   const GeometryTolerances& tol) {
  if (objective.size() != P.dim()) {
    std::ostringstream os;
    os << "lp_solve: objective dimension " << objective.size() << " != polytope dimension "
       << P.dim();
    throw ArgumentError(os.str());
  }
  return solve_lp(P.C(), P.d(), objective, sense, tol.feasibility);
}

bool is_feasible(const HPolytope& P, const GeometryTolerances& tol) {
  return lp_solve(Vector::Zero(P.dim()), P, Sense::Max, tol).status != LpStatus::Infeasible;
}

bool contains(const HPolytope& P, const Vector& x, double tol) {
  if (x.size() != P.dim()) throw ArgumentError("contains: point dimension mismatch");
  if (P.rows() == 0) return true;
  return ((P.C() * x - P.d()).array() <= tol).all();
}

bool is_subset(const HPolytope& P, const HPolytope& Q, const GeometryTolerances& tol) {
  if (P.dim() != Q.dim()) throw ArgumentError("is_subset: dimension mismatch");
  if (!is_feasible(P, tol)) return true;
  for (int i = 0; i < Q.rows(); ++i) {
    const LpOutcome r = lp_solve(Q.C().row(i).transpose(), P, Sense::Max, tol);
    if (r.status == LpStatus::Unbounded) {
      std::ostringstream os;
      os << "is_subset: P is unbounded along row " << i << " of Q";
      throw GeometryError(os.str());
    }
    if (r.value > Q.d()(i) + tol.geometric) return false;
  }
  return true;
}

HPolytope remove_redundant(const HPolytope& P, const GeometryTolerances& tol) {
  if (!is_feasible(P, tol)) throw GeometryError("remove_redundant: polytope is empty");
  const int rows = P.rows();
  std::vector<char> keep(static_cast<std::size_t>(rows), 1);
  for (int i = 0; i < rows; ++i) {
    keep[static_cast<std::size_t>(i)] = 0;
    int count = 0;
    for (char k : keep) count += k;
    Matrix C(count, P.dim());
    Vector d(count);
    int r = 0;
    for (int j = 0; j < rows; ++j) {
      if (!keep[static_cast<std::size_t>(j)]) continue;
      C.row(r) = P.C().row(j);
      d(r) = P.d()(j);
      ++r;
    }
    const LpOutcome out = solve_lp(C, d, P.C().row(i).transpose(), Sense::Max, tol.feasibility);
    const bool redundant = out.status == LpStatus::Optimal && out.value <= P.d()(i) + tol.geometric;
    if (!redundant) keep[static_cast<std::size_t>(i)] = 1;
  }
  int count = 0;
  for (char k : keep) count += k;
  Matrix C(count, P.dim());
  Vector d(count);
  int r = 0;
  for (int j = 0; j < rows; ++j) {
    if (!keep[static_cast<std::size_t>(j)]) continue;
    C.row(r) = P.C().row(j);
    d(r) = P.d()(j);
    ++r;
  }
  if (count == 0) return HPolytope::universe(P.dim());
  return HPolytope(C, d);
}

namespace {

// One Fourier-Motzkin step removing column j. Returns false if a zero row
// certifies emptiness.
bool eliminate_column(Matrix& C, Vector& d, Eigen::Index j, const GeometryTolerances& tol) {
  std::vector<Eigen::Index> pos, neg, zero;
  for (Eigen::Index i = 0; i < C.rows(); ++i) {
    const double a = C(i, j);
    if (a > kZeroRow)
      pos.push_back(i);
    else if (a < -kZeroRow)
      neg.push_back(i);
    else
      zero.push_back(i);
  }
  const std::size_t produced = zero.size() + pos.size() * neg.size();
  if (produced > tol.fm_row_cap) {
    std::ostringstream os;
    os << "project: Fourier-Motzkin produced " << produced << " rows, exceeding the row cap of "
       << tol.fm_row_cap;
    throw ResourceError(os.str());
  }

  const Eigen::Index cols = C.cols() - 1;
  auto drop = [&](const Eigen::RowVectorXd& row) {
    Eigen::RowVectorXd out(cols);
    out << row.head(j), row.tail(cols - j);
    return out;
  };

  std::vector<Eigen::RowVectorXd> rows;
  std::vector<double> offs;
  auto push = [&](const Eigen::RowVectorXd& row, double off) {
    const double norm = row.norm();
    if (norm <= 1e-10) {
      return off >= -tol.feasibility;
    }
    rows.push_back(row / norm);
    offs.push_back(off / norm);
    return true;
  };
  for (Eigen::Index i : zero)
    if (!push(drop(C.row(i)), d(i))) return false;
  for (Eigen::Index p : pos) {
    for (Eigen::Index q : neg) {
      const double wp = -C(q, j);
      const double wq = C(p, j);
      const Eigen::RowVectorXd row = wp * C.row(p) + wq * C.row(q);
      if (!push(drop(row), wp * d(p) + wq * d(q))) return false;
    }
  }
  C.resize(static_cast<Eigen::Index>(rows.size()), cols);
  d.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    C.row(static_cast<Eigen::Index>(r)) = rows[r];
    d(static_cast<Eigen::Index>(r)) = offs[r];
  }
  return true;
}

}  // namespace

HPolytope project(const HPolytope& P, const std::vector<int>& keep, const GeometryTolerances& tol) {
  std::vector<int> kept = keep;
  std::sort(kept.begin(), kept.end());
  kept.erase(std::unique(kept.begin(), kept.end()), kept.end());
  if (kept.empty() || static_cast<int>(kept.size()) >= P.dim() || kept.front() < 0 ||
      kept.back() >= P.dim())
    throw ArgumentError("project: keep must be a strict nonempty subset of the coordinates");

  std::vector<int> dropped;
  for (int j = 0; j < P.dim(); ++j)
    if (!std::binary_search(kept.begin(), kept.end(), j)) dropped.push_back(j);

  const int out_dim = static_cast<int>(kept.size());
  if (!is_feasible(P, tol)) return HPolytope::empty(out_dim);

  Matrix C = P.C();
  Vector d = P.d();
  // Highest index first so lower column indices stay valid.
  for (auto it = dropped.rbegin(); it != dropped.rend(); ++it) {
    if (!eliminate_column(C, d, *it, tol)) return HPolytope::empty(out_dim);
    if (C.rows() == 0) continue;
    HPolytope step(C, d);
    if (!is_feasible(step, tol)) return HPolytope::empty(out_dim);
    step = remove_redundant(step, tol);
    C = step.C();
    d = step.d();
  }
  if (C.rows() == 0) return HPolytope::universe(out_dim);
  return HPolytope(C, d);
}

HPolytope intersect(const HPolytope& P, const HPolytope& Q, const GeometryTolerances& tol) {
  if (P.dim() != Q.dim()) throw ArgumentError("intersect: dimension mismatch");
  if (P.rows() + Q.rows() == 0) return HPolytope::universe(P.dim());
  Matrix C(P.rows() + Q.rows(), P.dim());
  Vector d(P.rows() + Q.rows());
  C << P.C(), Q.C();
  d << P.d(), Q.d();
  HPolytope stacked(C, d);
  if (!is_feasible(stacked, tol)) return stacked;
  return remove_redundant(stacked, tol);
}

ChebyshevBall chebyshev_center(const HPolytope& P, const GeometryTolerances& tol) {
  const int n = P.dim();
  Matrix C = Matrix::Zero(P.rows() + 1, n + 1);
  Vector d = Vector::Zero(P.rows() + 1);
  C.topLeftCorner(P.rows(), n) = P.C();
  for (int i = 0; i < P.rows(); ++i) C(i, n) = P.C().row(i).norm();
  d.head(P.rows()) = P.d();
  C(P.rows(), n) = -1.0;
  Vector obj = Vector::Zero(n + 1);
  obj(n) = 1.0;
  const LpOutcome out = solve_lp(C, d, obj, Sense::Max, tol.feasibility);
  if (out.status == LpStatus::Infeasible) throw GeometryError("chebyshev_center: polytope is empty");
  if (out.status == LpStatus::Unbounded)
    throw GeometryError("chebyshev_center: polytope is unbounded");
  ChebyshevBall ball;
  ball.center = out.point.head(n);
  ball.radius = std::max(out.point(n), 0.0);
  ball.flat = ball.radius <= tol.geometric;
  return ball;
}

}  // namespace mpcgrad
