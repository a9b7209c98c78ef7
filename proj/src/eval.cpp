#include "mpcgrad/eval.hpp"

#include "mpcgrad/errors.hpp"
#include "mpcgrad/sampler.hpp"

#include <cmath>
#include <limits>
#include <random>

namespace mpcgrad {

NmseResult nmse(const std::vector<Vector>& predictions, const std::vector<Vector>& truths) {
  if (predictions.size() != truths.size() || truths.empty())
    throw ArgumentError("nmse: need equally many predictions and truths (at least one)");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    if (predictions[i].size() != truths[i].size()) throw ArgumentError("nmse: dimension mismatch");
    num += (predictions[i] - truths[i]).squaredNorm();
    den += truths[i].squaredNorm();
  }
  if (den == 0.0) throw ArgumentError("nmse: undefined when every truth is zero");
  NmseResult r;
  r.n_samples = static_cast<int>(truths.size());
  r.ratio = num / den;
  r.exact = r.ratio == 0.0;
  r.db = r.exact ? -std::numeric_limits<double>::infinity() : 10.0 * std::log10(r.ratio);
  return r;
}

std::optional<double> control_cost(const Trajectory& traj, const MpcProblem& problem) {
  if (traj.states.empty() || traj.states.size() != traj.inputs.size() + 1)
    throw ArgumentError("control_cost: malformed trajectory");
  const Vector& x0 = traj.states.front();
  const double norm2 = x0.squaredNorm();
  if (std::sqrt(norm2) < kMinInitialNorm) return std::nullopt;
  double J = 0.0;
  for (std::size_t k = 0; k < traj.inputs.size(); ++k) {
    const Vector& x = traj.states[k];
    const Vector& u = traj.inputs[k];
    J += x.dot(problem.Q * x) + u.dot(problem.R * u);
  }
  const Vector& xT = traj.states.back();
  J += xT.dot(problem.QN * xT);
  return J / norm2;
}

CostResult closed_loop_cost(const Controller& controller, const MpcProblem& problem,
                            const std::vector<Vector>& initial_states, int steps) {
  CostResult r;
  for (const Vector& x0 : initial_states) {
    const Trajectory traj = closed_loop(problem.system, controller, x0, steps);
    const auto J = control_cost(traj, problem);
    if (!J) {
      ++r.excluded;
      continue;
    }
    r.per_trajectory.push_back(*J);
    r.violations += count_violations(traj, problem);
  }
  double sum = 0.0;
  for (double J : r.per_trajectory) sum += J;
  r.mean = r.per_trajectory.empty() ? 0.0 : sum / static_cast<double>(r.per_trajectory.size());
  return r;
}

NmseResult test_nmse(const Controller& controller, const Dataset& test_ds) {
  std::vector<Vector> pred, truth;
  pred.reserve(test_ds.samples.size());
  truth.reserve(test_ds.samples.size());
  for (const SampleTriplet& s : test_ds.samples) {
    pred.push_back(controller(s.x));
    truth.push_back(s.u);
  }
  return nmse(pred, truth);
}

Controller network_controller(const MlpParams& params) {
  return [params](const Vector& x) { return forward(params, x); };
}

Controller mpc_controller(const CondensedQp& qp, const QpOptions& opts) {
  return [qp, opts](const Vector& x) { return control_law(qp, x, opts); };
}

SurrogateEvaluation evaluate_surrogate(const MlpParams& params, const Dataset& test_ds,
                                       const MpcProblem& problem, const HPolytope& c_inf,
                                       int n_traj, int steps, std::uint64_t seed) {
  require_problem(test_ds, problem);
  const Controller net = network_controller(params);
  SurrogateEvaluation ev;
  ev.nmse = test_nmse(net, test_ds);
  ev.cost = closed_loop_cost(net, problem, sample_states(c_inf, n_traj, seed), steps);
  return ev;
}

LsDemoResult gradient_ls_demo(int n, double lambda_e, double lambda_v, double l1, double l2,
                              int reps, std::uint64_t seed) {
  if (n < 1 || reps < 2) throw ArgumentError("gradient_ls_demo: need n >= 1 and reps >= 2");
  if (!(lambda_e > 0.0) || !(lambda_v > 0.0))
    throw ArgumentError("gradient_ls_demo: noise variances must be positive");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> e_noise(0.0, std::sqrt(lambda_e));
  std::normal_distribution<double> v_noise(0.0, std::sqrt(lambda_v));

  LsDemoResult r;
  r.estimates.reserve(static_cast<std::size_t>(reps));
  r.mean_difference.reserve(static_cast<std::size_t>(reps));
  for (int rep = 0; rep < reps; ++rep) {
    // Normal equations of V(l1, l2) with regressors (x, 1) and (1, 0).
    Eigen::Matrix2d normal = Eigen::Matrix2d::Zero();
    Eigen::Vector2d rhs = Eigen::Vector2d::Zero();
    double diff = 0.0;
    for (int k = 0; k < n; ++k) {
      const double x = 1.0;
      const double u = l1 * x + l2 + e_noise(rng);
      const double du = l1 + v_noise(rng);
      const Eigen::Vector2d phi(x, 1.0);
      normal += phi * phi.transpose() / lambda_e;
      rhs += phi * u / lambda_e;
      normal(0, 0) += 1.0 / lambda_v;
      rhs(0) += du / lambda_v;
      diff += u - du;
    }
    r.estimates.push_back(normal.ldlt().solve(rhs));
    r.mean_difference.push_back(diff / n);
  }

  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& e : r.estimates) mean += e;
  mean /= reps;
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& e : r.estimates) cov += (e - mean) * (e - mean).transpose();
  r.empirical_cov = cov / (reps - 1);
  r.mean_estimate = mean;
  r.predicted_cov << lambda_v, -lambda_v, -lambda_v, lambda_e + lambda_v;
  r.predicted_cov /= n;
  return r;
}

}  // namespace mpcgrad
