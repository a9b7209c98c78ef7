#pragma once

#include "mpcgrad/dataset.hpp"
#include "mpcgrad/mpc.hpp"
#include "mpcgrad/neural.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <vector>

namespace mpcgrad {

struct NmseResult {
  double ratio = 0.0;
  double db = 0.0;          ///< 10 log10(ratio); -infinity when exact
  bool exact = false;       ///< ratio == 0
  int n_samples = 0;
};

/// mean |u_hat - u|^2 / mean |u|^2. Throws ArgumentError when every truth is zero.
NmseResult nmse(const std::vector<Vector>& predictions, const std::vector<Vector>& truths);

/// Trajectories whose initial state has norm below this are left out of cost averages.
inline constexpr double kMinInitialNorm = 1e-9;

/**
 * (x_T' QN x_T + sum_{k<T} x_k' Q x_k + u_k' R u_k) / x_0' x_0 over the T
 * simulated steps. Empty when x_0 is (numerically) zero.
 */
std::optional<double> control_cost(const Trajectory& traj, const MpcProblem& problem);

struct CostResult {
  std::vector<double> per_trajectory;
  double mean = 0.0;
  int violations = 0;  ///< constraint-violating steps over all trajectories
  int excluded = 0;    ///< zero initial states
};

CostResult closed_loop_cost(const Controller& controller, const MpcProblem& problem,
                            const std::vector<Vector>& initial_states, int steps);

struct SurrogateEvaluation {
  NmseResult nmse;
  CostResult cost;
};

/// NMSE over the test set's (x, u) pairs; the stored gradients are never read.
NmseResult test_nmse(const Controller& controller, const Dataset& test_ds);

/**
 * Test NMSE plus closed-loop cost from n_traj hit-and-run initial states in
 * c_inf (seeded by `seed`), `steps` steps each, with the network as controller.
 */
SurrogateEvaluation evaluate_surrogate(const MlpParams& params, const Dataset& test_ds,
                                       const MpcProblem& problem, const HPolytope& c_inf,
                                       int n_traj = 100, int steps = 3, std::uint64_t seed = 0);

Controller network_controller(const MlpParams& params);
Controller mpc_controller(const CondensedQp& qp, const QpOptions& opts = {});

struct LsDemoResult {
  Eigen::Matrix2d empirical_cov;
  Eigen::Matrix2d predicted_cov;       ///< (1/N) [[lv, -lv], [-lv, le + lv]]
  Eigen::Vector2d mean_estimate;
  std::vector<Eigen::Vector2d> estimates;
  std::vector<double> mean_difference;  ///< per repetition: average of u_k - u'_k
};

/**
 * Scalar law u = l1 x + l2 observed with noise at x_k = 1, together with
 * noisy derivative measurements u'_k = l1 + v_k, fitted by weighted least
 * squares over `reps` Monte Carlo repetitions.
 */
LsDemoResult gradient_ls_demo(int n, double lambda_e, double lambda_v, double l1, double l2,
                              int reps, std::uint64_t seed);

}  // namespace mpcgrad
