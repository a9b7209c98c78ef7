#include "mpcgrad/errors.hpp"
#include "mpcgrad/invariant.hpp"
#include "mpcgrad/mpc.hpp"
#include "mpcgrad/sampler.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace mpcgrad;

namespace {

HPolytope box(int n, double r) { return HPolytope::box(Vector::Constant(n, -r), Vector::Constant(n, r)); }

bool same_set(const HPolytope& P, const HPolytope& Q) { return is_subset(P, Q) && is_subset(Q, P); }

// Is there u in U with A x + B u in S? Decided by interval arithmetic on the
// scalar input.
bool one_step_reachable(const HPolytope& S, const Matrix& A, const Matrix& B, const HPolytope& U,
                        const Vector& x) {
  Matrix C(S.rows() + U.rows(), A.cols() + 1);
  Vector d(S.rows() + U.rows());
  C.topLeftCorner(S.rows(), A.cols()) = S.C() * A;
  C.topRightCorner(S.rows(), 1) = S.C() * B;
  C.bottomLeftCorner(U.rows(), A.cols()).setZero();
  C.bottomRightCorner(U.rows(), 1) = U.C();
  d << S.d(), U.d();
  return oracle::lift_feasible(C, d, x, 1e-9);
}

}  // namespace

TEST(PreSet, StaticDynamicsLeaveSetUnchanged) {
  const HPolytope S = box(2, 3.0);
  const HPolytope P = pre_set(S, Matrix::Identity(2, 2), Matrix::Zero(2, 1), box(1, 1.0));
  EXPECT_TRUE(same_set(P, S));
}

TEST(PreSet, FullyActuatedIsUnconstrained) {
  const HPolytope S = box(2, 1.0);
  const HPolytope P = pre_set(S, Matrix::Zero(2, 2), Matrix::Identity(2, 2), box(2, 2.0));
  EXPECT_EQ(P.rows(), 0);
  EXPECT_EQ(P.dim(), 2);
}

TEST(PreSet, DoubleIntegratorGridOracle) {
  const auto p = oracle::double_integrator();
  const HPolytope P = pre_set(p.X, p.system.A, p.system.B, p.U);
  int inside = 0;
  for (int i = 0; i <= 100; ++i)
    for (int j = 0; j <= 100; ++j) {
      const Vector x = (Vector(2) << -6.0 + 0.12 * i, -6.0 + 0.12 * j).finished();
      const bool truth = one_step_reachable(p.X, p.system.A, p.system.B, p.U, x);
      ASSERT_EQ(contains(P, x, 1e-9), truth) << x.transpose();
      inside += truth;
    }
  EXPECT_GT(inside, 0);
  EXPECT_LT(inside, 101 * 101);
}

TEST(PreSet, DimensionMismatch) {
  EXPECT_THROW(pre_set(box(3, 1.0), Matrix::Identity(2, 2), Matrix::Zero(2, 1), box(1, 1.0)),
               ArgumentError);
}

TEST(MaxControlInvariant, AlreadyInvariant) {
  const HPolytope X = box(2, 2.0);
  const InvariantResult r =
      max_control_invariant(X, box(1, 1.0), Matrix::Identity(2, 2), Matrix::Zero(2, 1));
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.iterations, 1);
  EXPECT_TRUE(same_set(r.c_inf, X));
}

TEST(MaxControlInvariant, DoubleIntegratorCertificate) {
  const auto p = oracle::double_integrator();
  const InvariantResult r = max_control_invariant(p.X, p.U, p.system.A, p.system.B);
  ASSERT_TRUE(r.converged);
  EXPECT_LT(r.iterations, 100);
  EXPECT_EQ(static_cast<int>(r.log.size()), r.iterations);
  EXPECT_TRUE(is_subset(r.c_inf, p.X));

  // Fixed point, both directions.
  const HPolytope next = intersect(pre_set(r.c_inf, p.system.A, p.system.B, p.U), p.X);
  EXPECT_TRUE(is_subset(next, r.c_inf, {1e-7, 1e-8, 10000}));
  EXPECT_TRUE(is_subset(r.c_inf, next, {1e-7, 1e-8, 10000}));

  // Control invariance at sampled states.
  const auto xs = sample_states(r.c_inf, 200, 17);
  for (const Vector& x : xs)
    EXPECT_TRUE(one_step_reachable(r.c_inf, p.system.A, p.system.B, p.U, x)) << x.transpose();

  // Every sampled state admits a feasible N = 3 MPC problem.
  const CondensedQp qp = condense(p);
  for (const Vector& x : sample_states(r.c_inf, 1000, 3))
    EXPECT_TRUE(oracle::enumerate_mpc(qp, x).feasible) << x.transpose();
}

TEST(MaxControlInvariant, IterateLogIsDecreasing) {
  const auto p = oracle::double_integrator();
  const InvariantResult r = max_control_invariant(p.X, p.U, p.system.A, p.system.B);
  // Re-run the iteration by hand and check the chain.
  HPolytope omega = p.X;
  for (int k = 0; k < r.iterations; ++k) {
    const HPolytope next = intersect(pre_set(omega, p.system.A, p.system.B, p.U), p.X);
    EXPECT_TRUE(is_subset(next, omega));
    omega = next;
  }
  EXPECT_TRUE(same_set(omega, r.c_inf));
}

TEST(MaxControlInvariant, IterationCapReportsNotConverged) {
  const auto p = oracle::double_integrator();
  const InvariantResult r = max_control_invariant(p.X, p.U, p.system.A, p.system.B, 1);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.iterations, 1);
}

TEST(MaxControlInvariant, NoInvariantSubsetIsGeometryError) {
  // Unstable scalar system that must leave [1, 2] whatever the input does.
  const HPolytope X(Matrix::Constant(2, 1, 1.0).cwiseProduct((Matrix(2, 1) << 1, -1).finished()),
                    (Vector(2) << 2.0, -1.0).finished());
  const HPolytope U = box(1, 0.1);
  EXPECT_THROW(max_control_invariant(X, U, Matrix::Constant(1, 1, 2.0), Matrix::Constant(1, 1, 1.0)),
               GeometryError);
}
