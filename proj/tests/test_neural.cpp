#include "mpcgrad/errors.hpp"
#include "mpcgrad/neural.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace mpcgrad;

namespace {

MlpParams one_hidden_unit() {
  MlpParams p;
  p.layers.push_back({Matrix::Constant(1, 1, 2.0), Vector::Constant(1, -1.0)});
  p.layers.push_back({Matrix::Constant(1, 1, 3.0), Vector::Constant(1, 0.5)});
  return p;
}

MlpParams random_params(const MlpArchitecture& arch, std::mt19937_64& rng) {
  MlpParams p = init_params(arch, rng());
  std::normal_distribution<double> g(0.0, 0.3);
  for (DenseLayer& l : p.layers)
    for (Eigen::Index i = 0; i < l.b.size(); ++i) l.b(i) = g(rng);
  return p;
}

Vector random_vector(int n, std::mt19937_64& rng, double scale = 3.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = u(rng);
  return v;
}

// Smallest |pre-activation| over the hidden layers at x.
double margin(const MlpParams& p, const Vector& x) {
  Vector h = x;
  double m = INFINITY;
  for (std::size_t l = 0; l + 1 < p.layers.size(); ++l) {
    const Vector z = p.layers[l].W * h + p.layers[l].b;
    m = std::min(m, z.cwiseAbs().minCoeff());
    h = z.cwiseMax(0.0);
  }
  return m;
}

std::vector<SampleTriplet> random_batch(int count, int n, int m, std::mt19937_64& rng) {
  std::vector<SampleTriplet> batch;
  for (int i = 0; i < count; ++i) {
    SampleTriplet s;
    s.x = random_vector(n, rng);
    s.u = random_vector(m, rng, 1.0);
    s.u_grad = Matrix::NullaryExpr(m, n, [&] { return std::normal_distribution<double>(0, 1)(rng); });
    batch.push_back(s);
  }
  return batch;
}

// Plain backprop of sum |u - mu(x)|^2, written without the library's batching.
Vector mse_backprop(const MlpParams& p, const std::vector<SampleTriplet>& batch) {
  const std::size_t L = p.layers.size();
  std::vector<Matrix> gW(L);
  std::vector<Vector> gb(L);
  for (std::size_t l = 0; l < L; ++l) {
    gW[l] = Matrix::Zero(p.layers[l].W.rows(), p.layers[l].W.cols());
    gb[l] = Vector::Zero(p.layers[l].b.size());
  }
  for (const SampleTriplet& s : batch) {
    std::vector<Vector> acts{s.x};
    std::vector<Vector> pre;
    for (std::size_t l = 0; l < L; ++l) {
      pre.push_back(p.layers[l].W * acts.back() + p.layers[l].b);
      acts.push_back(l + 1 < L ? Vector(pre.back().cwiseMax(0.0)) : pre.back());
    }
    Vector delta = 2.0 * (acts.back() - s.u);
    for (std::size_t l = L; l-- > 0;) {
      if (l + 1 < L)
        for (Eigen::Index i = 0; i < delta.size(); ++i)
          if (pre[l](i) <= 0.0) delta(i) = 0.0;
      gW[l] += delta * acts[l].transpose();
      gb[l] += delta;
      delta = p.layers[l].W.transpose() * delta;
    }
  }
  MlpParams g = p;
  for (std::size_t l = 0; l < L; ++l) g.layers[l] = {gW[l], gb[l]};
  return flatten(g);
}

Dataset teacher_dataset(const MlpParams& teacher, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Dataset ds;
  ds.kind = DatasetKind::Train;
  ds.state_dim = 2;
  ds.input_dim = 1;
  for (int i = 0; i < count; ++i) {
    SampleTriplet s;
    s.x = random_vector(2, rng, 2.0);
    s.u = forward(teacher, s.x);
    s.u_grad = input_jacobian(teacher, s.x);
    ds.samples.push_back(s);
  }
  return ds;
}

}  // namespace

TEST(Forward, HandComputedSingleUnit) {
  EXPECT_DOUBLE_EQ(forward(one_hidden_unit(), Vector::Constant(1, 1.0))(0), 3.5);
  EXPECT_DOUBLE_EQ(input_jacobian(one_hidden_unit(), Vector::Constant(1, 1.0))(0, 0), 6.0);
}

TEST(Forward, ZeroParamsGiveZero) {
  const MlpArchitecture arch{2, {5, 3}, 1};
  const MlpParams p = unflatten(arch, Vector::Zero(static_cast<Eigen::Index>(init_params(arch, 0).size())));
  EXPECT_EQ(forward(p, (Vector(2) << 3, -4).finished())(0), 0.0);
}

TEST(Forward, DeadNetworkOutputsFinalBias) {
  MlpParams p = init_params({2, {4}, 2}, 1);
  p.layers[0].W.setZero();
  p.layers[0].b.setConstant(-1.0);
  p.layers[1].b << 0.25, -7.0;
  const Vector x = (Vector(2) << 1, 2).finished();
  EXPECT_EQ(forward(p, x), p.layers[1].b);
  EXPECT_EQ(input_jacobian(p, x), Matrix::Zero(2, 2));
}

TEST(InputJacobian, LinearRegimeIsWeightProduct) {
  MlpParams p = init_params({3, {4, 5}, 2}, 2);
  p.layers[0].b.setConstant(100.0);
  p.layers[1].W = p.layers[1].W.cwiseAbs();
  p.layers[1].b.setConstant(100.0);
  const Vector x = (Vector(3) << 0.1, 0.2, 0.3).finished();
  const Matrix expected = p.layers[2].W * p.layers[1].W * p.layers[0].W;
  EXPECT_LE((input_jacobian(p, x) - expected).norm(), 1e-12);
}

TEST(InputJacobian, FiniteDifferences) {
  std::mt19937_64 rng(11);
  const MlpArchitecture arch{2, {16, 16}, 1};
  int checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const MlpParams p = random_params(arch, rng);
    const Vector x = random_vector(2, rng);
    if (margin(p, x) < 1e-3) continue;
    const double h = 1e-6;
    Matrix fd(1, 2);
    for (int j = 0; j < 2; ++j) {
      Vector xp = x, xm = x;
      xp(j) += h;
      xm(j) -= h;
      fd.col(j) = (forward(p, xp) - forward(p, xm)) / (2 * h);
    }
    EXPECT_LE(oracle::rel_error(input_jacobian(p, x), fd), 1e-6);
    ++checked;
  }
  EXPECT_GT(checked, 100);
}

TEST(InputJacobian, LocalAffineExactness) {
  std::mt19937_64 rng(12);
  const MlpArchitecture arch{2, {16, 16}, 1};
  for (int trial = 0; trial < 100; ++trial) {
    const MlpParams p = random_params(arch, rng);
    const Vector x = random_vector(2, rng);
    const double r = margin(p, x);
    if (r < 1e-3) continue;
    // A step small enough that no pre-activation changes sign.
    double gain = 1.0;
    for (const DenseLayer& l : p.layers) gain *= l.W.norm();
    const Vector dx = random_vector(2, rng, 1.0).normalized() * (0.5 * r / gain);
    const Vector predicted = forward(p, x) + input_jacobian(p, x) * dx;
    EXPECT_LE((forward(p, x + dx) - predicted).norm(), 1e-9);
  }
}

TEST(SobolevLoss, HandCase) {
  MlpParams p = init_params({2, {3}, 1}, 0);
  p.layers[1].W.setZero();
  p.layers[1].b.setZero();
  SampleTriplet s{Vector::Zero(2), Vector::Constant(1, 1.0), (Matrix(1, 2) << 2, 0).finished(), false};
  EXPECT_DOUBLE_EQ(sobolev_loss(p, std::span(&s, 1), 10.0), 41.0);
  EXPECT_DOUBLE_EQ(sobolev_loss(p, std::span(&s, 1), 0.0), 1.0);
}

TEST(SobolevLoss, PerfectFitIsZeroWithZeroGradient) {
  const MlpParams teacher = init_params({2, {8}, 1}, 5);
  const Dataset ds = teacher_dataset(teacher, 20, 1);
  EXPECT_LE(sobolev_loss(teacher, ds.samples, 1.0), 1e-24);
  EXPECT_LE(flatten(loss_gradient(teacher, ds.samples, 1.0)).norm(), 1e-12);
}

TEST(SobolevLoss, EmptyBatch) {
  const MlpParams p = init_params({2, {3}, 1}, 0);
  EXPECT_THROW(sobolev_loss(p, {}, 1.0), ArgumentError);
}

TEST(LossGradient, FiniteDifferencesOverParameters) {
  std::mt19937_64 rng(21);
  const MlpArchitecture arch{2, {6, 5}, 1};
  for (int trial = 0; trial < 20; ++trial) {
    const MlpParams p = random_params(arch, rng);
    const auto batch = random_batch(5, 2, 1, rng);
    bool smooth = true;
    for (const auto& s : batch) smooth = smooth && margin(p, s.x) > 1e-3;
    if (!smooth) continue;
    const double gamma = trial % 2 ? 0.7 : 5.0;
    const Vector theta = flatten(p);
    const Vector g = flatten(loss_gradient(p, batch, gamma));
    Vector fd(theta.size());
    const double h = 1e-6;
    for (Eigen::Index k = 0; k < theta.size(); ++k) {
      Vector tp = theta, tm = theta;
      tp(k) += h;
      tm(k) -= h;
      fd(k) = (sobolev_loss(unflatten(arch, tp), batch, gamma) -
               sobolev_loss(unflatten(arch, tm), batch, gamma)) /
              (2 * h);
    }
    EXPECT_LE(oracle::rel_error(g, fd), 1e-5);
  }
}

TEST(LossGradient, GammaZeroIsPlainBackprop) {
  std::mt19937_64 rng(22);
  const MlpArchitecture arch{3, {7, 4}, 2};
  for (int trial = 0; trial < 20; ++trial) {
    const MlpParams p = random_params(arch, rng);
    const auto batch = random_batch(4, 3, 2, rng);
    EXPECT_LE(oracle::rel_error(flatten(loss_gradient(p, batch, 0.0)), mse_backprop(p, batch)), 1e-12);
  }
}

TEST(Params, InitDeterministicWithZeroBiases) {
  const MlpArchitecture arch{2, {16, 16}, 1};
  EXPECT_EQ(init_params(arch, 3), init_params(arch, 3));
  EXPECT_NE(init_params(arch, 3), init_params(arch, 4));
  const MlpParams p = init_params(arch, 3);
  ASSERT_EQ(p.layers.size(), 3u);
  for (const DenseLayer& l : p.layers) EXPECT_EQ(l.b.norm(), 0.0);
  const double limit = std::sqrt(6.0 / (2 + 16));
  EXPECT_LE(p.layers[0].W.cwiseAbs().maxCoeff(), limit);
  EXPECT_EQ(p.size(), 2u * 16 + 16 + 16 * 16 + 16 + 16 + 1);
  EXPECT_EQ(p.architecture(), arch);
}

TEST(Params, FlattenRoundTrip) {
  const MlpArchitecture arch{2, {4, 3}, 2};
  const MlpParams p = init_params(arch, 9);
  const Vector theta = flatten(p);
  EXPECT_EQ(static_cast<std::size_t>(theta.size()), p.size());
  EXPECT_EQ(unflatten(arch, theta), p);
  EXPECT_EQ(theta(1), p.layers[0].W(0, 1));
  EXPECT_THROW(unflatten(arch, Vector::Zero(3)), ArgumentError);
}

TEST(Params, JsonRoundTrip) {
  MlpParams p = init_params({2, {5}, 1}, 4);
  p.layers[0].b(2) = 1.0 / 3.0;
  EXPECT_EQ(params_from_json(Json::parse(params_to_json(p).dump())), p);
  Json bad = params_to_json(p);
  bad.erase("layers");
  EXPECT_THROW(params_from_json(bad), ParseError);
}

TEST(Architecture, Validation) {
  EXPECT_THROW((MlpArchitecture{2, {}, 1}.validate()), ArgumentError);
  EXPECT_THROW((MlpArchitecture{2, {0}, 1}.validate()), ArgumentError);
  EXPECT_THROW((MlpArchitecture{0, {3}, 1}.validate()), ArgumentError);
}

TEST(Train, ReachesTargetOnRealizableData) {
  const MlpParams teacher = init_params({2, {4}, 1}, 31);
  const Dataset ds = teacher_dataset(teacher, 25, 2);
  TrainConfig cfg;
  cfg.seed = 1;
  cfg.learning_rate = 3e-3;
  cfg.max_epochs = 20000;
  const TrainReport r = train(ds, {2, {16, 16}, 1}, cfg);
  EXPECT_EQ(r.stop_reason, StopReason::TargetReached);
  EXPECT_LE(r.loss_history.back(), cfg.loss_target);
  EXPECT_EQ(static_cast<int>(r.loss_history.size()), r.epochs_run);
  EXPECT_NEAR(sobolev_loss(r.final_params, ds.samples, 0.0), r.loss_history.back(), 1e-12);
}

TEST(Train, DeterministicAndFinite) {
  const MlpParams teacher = init_params({2, {4}, 1}, 32);
  const Dataset ds = teacher_dataset(teacher, 12, 3);
  TrainConfig cfg;
  cfg.seed = 5;
  cfg.gamma = 1.0;
  cfg.max_epochs = 200;
  const TrainReport a = train(ds, {2, {8}, 1}, cfg);
  const TrainReport b = train(ds, {2, {8}, 1}, cfg);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.epochs_run, 200);
  EXPECT_EQ(a.stop_reason, StopReason::EpochCap);
  for (double l : a.loss_history) EXPECT_TRUE(std::isfinite(l));
  cfg.seed = 6;
  EXPECT_NE(train(ds, {2, {8}, 1}, cfg).final_params, a.final_params);
}

TEST(Train, DivergenceIsNumericalError) {
  const MlpParams teacher = init_params({2, {4}, 1}, 33);
  Dataset ds = teacher_dataset(teacher, 10, 4);
  for (auto& s : ds.samples) s.u *= 1e200;
  TrainConfig cfg;
  cfg.learning_rate = 1e100;
  cfg.max_epochs = 50;
  EXPECT_THROW(train(ds, {2, {8}, 1}, cfg), NumericalError);
}

TEST(Train, RejectsBadInput) {
  const MlpParams teacher = init_params({2, {4}, 1}, 34);
  Dataset ds = teacher_dataset(teacher, 10, 4);
  TrainConfig cfg;
  EXPECT_THROW(train(ds, {3, {8}, 1}, cfg), ArgumentError);
  cfg.batch_size = 0;
  EXPECT_THROW(train(ds, {2, {8}, 1}, cfg), ArgumentError);
  cfg = {};
  ds.kind = DatasetKind::Test;
  EXPECT_THROW(train(ds, {2, {8}, 1}, cfg), ArgumentError);
}
