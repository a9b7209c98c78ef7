#pragma once

#include "mpcgrad/eval.hpp"
#include "mpcgrad/invariant.hpp"
#include "mpcgrad/json_io.hpp"
#include "mpcgrad/neural.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mpcgrad {

struct ExperimentConfig {
  MpcProblem problem;
  std::vector<double> gammas = {0.0, 0.1, 1.0, 10.0};
  std::vector<int> train_sizes = {25, 50, 100};
  int networks_per_cell = 10;
  int test_size = 100;
  int n_traj = 100;
  int steps = 3;
  std::uint64_t base_seed = 0;
  MlpArchitecture arch;
  TrainConfig train;  ///< gamma and seed are set per cell
  QpOptions qp;
  int cinf_max_iter = 100;
  int jobs = 1;

  void validate() const;
};

/**
 * Reads a JSON experiment config. "problem" is a path relative to the
 * config file; every other key is optional.
 */
ExperimentConfig load_experiment_config(const std::string& path);

/// Seed purposes for derive_seed.
enum class SeedPurpose : std::uint64_t { TestData = 1, TrainData = 2, Training = 3, Trajectories = 4 };

/**
 * splitmix64 chained over (base, purpose, size index, replicate index).
 * Training data and network initialization depend on the size and
 * replicate only, so every gamma sees the same data and initial weights.
 */
std::uint64_t derive_seed(std::uint64_t base, SeedPurpose purpose, std::uint64_t size_index = 0,
                          std::uint64_t replicate = 0);

struct CellResult {
  int size_index = 0;
  int gamma_index = 0;
  int replicate = 0;
  std::uint64_t data_seed = 0;
  std::uint64_t train_seed = 0;
  bool ok = false;
  std::string error;
  int epochs = 0;
  StopReason stop_reason = StopReason::EpochCap;
  double final_loss = 0.0;
  NmseResult nmse;
  CostResult cost;
};

struct ExperimentResult {
  std::string problem_hash;
  InvariantResult cinf;
  std::vector<Vector> initial_states;
  CostResult optimal_cost;  ///< true MPC law from the same initial states
  std::vector<CellResult> cells;

  /// 10 log10 of the replicate-averaged NMSE ratio; NaN if no cell succeeded.
  double mean_nmse_db(int size_index, int gamma_index) const;
  /// Mean J over every trajectory of every replicate in the cell.
  double mean_cost(int size_index, int gamma_index) const;
  /// Per trajectory index, J averaged over the cell's replicates.
  std::vector<double> trajectory_costs(int size_index, int gamma_index) const;
  int best_gamma_index(int size_index) const;
  int failures() const;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// nmse.csv, cost.csv, summary.csv, control_cost.csv, report.md.
void write_experiment_outputs(const ExperimentConfig& cfg, const ExperimentResult& result,
                              const std::string& out_dir);

}  // namespace mpcgrad
