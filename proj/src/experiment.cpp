#include "mpcgrad/experiment.hpp"

#include "mpcgrad/errors.hpp"
#include "mpcgrad/sampler.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

namespace mpcgrad {

void ExperimentConfig::validate() const {
  problem.validate();
  if (gammas.empty() || train_sizes.empty()) throw ArgumentError("experiment: empty grid");
  for (double g : gammas)
    if (!(g >= 0.0)) throw ArgumentError("experiment: gammas must be >= 0");
  for (int s : train_sizes)
    if (s < 1) throw ArgumentError("experiment: train sizes must be >= 1");
  if (networks_per_cell < 1 || test_size < 1 || n_traj < 1 || steps < 1 || jobs < 1)
    throw ArgumentError("experiment: counts must be >= 1");
  arch.validate();
  train.validate();
  if (arch.input_dim != problem.state_dim() || arch.output_dim != problem.input_dim())
    throw ArgumentError("experiment: network dimensions do not match the problem");
}

namespace {

template <class T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j[key].get<T>();
  } catch (const Json::exception&) {
    throw ParseError(std::string("experiment config: field '") + key + "' has the wrong type");
  }
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::string fmt(double v, int prec = 4) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v < 0 ? "-inf" : "inf";
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(prec);
  os << v;
  return os.str();
}

}  // namespace

ExperimentConfig load_experiment_config(const std::string& path) {
  const Json j = read_json_file(path);
  if (!j.is_object()) throw ParseError(path + ": expected a JSON object");
  if (!j.contains("problem") || !j["problem"].is_string())
    throw ParseError(path + ": missing string field 'problem'");
  std::filesystem::path problem_path = j["problem"].get<std::string>();
  if (problem_path.is_relative())
    problem_path = std::filesystem::path(path).parent_path() / problem_path;

  ExperimentConfig cfg;
  cfg.problem = problem_from_json(read_json_file(problem_path.string()));
  cfg.gammas = get_or(j, "gammas", cfg.gammas);
  cfg.train_sizes = get_or(j, "train_sizes", cfg.train_sizes);
  cfg.networks_per_cell = get_or(j, "networks_per_cell", cfg.networks_per_cell);
  cfg.test_size = get_or(j, "test_size", cfg.test_size);
  cfg.n_traj = get_or(j, "n_traj", cfg.n_traj);
  cfg.steps = get_or(j, "steps", cfg.steps);
  cfg.base_seed = get_or(j, "base_seed", cfg.base_seed);
  cfg.jobs = get_or(j, "jobs", cfg.jobs);
  cfg.cinf_max_iter = get_or(j, "cinf_max_iter", cfg.cinf_max_iter);
  cfg.arch.input_dim = cfg.problem.state_dim();
  cfg.arch.output_dim = cfg.problem.input_dim();
  cfg.arch.hidden = get_or(j, "hidden", cfg.arch.hidden);
  if (j.contains("train")) {
    const Json& t = j["train"];
    cfg.train.batch_size = get_or(t, "batch_size", cfg.train.batch_size);
    cfg.train.learning_rate = get_or(t, "learning_rate", cfg.train.learning_rate);
    cfg.train.beta1 = get_or(t, "beta1", cfg.train.beta1);
    cfg.train.beta2 = get_or(t, "beta2", cfg.train.beta2);
    cfg.train.adam_eps = get_or(t, "adam_eps", cfg.train.adam_eps);
    cfg.train.loss_target = get_or(t, "loss_target", cfg.train.loss_target);
    cfg.train.max_epochs = get_or(t, "max_epochs", cfg.train.max_epochs);
    cfg.train.shuffle = get_or(t, "shuffle", cfg.train.shuffle);
  }
  cfg.qp.act_tol = get_or(j, "act_tol", cfg.qp.act_tol);
  cfg.validate();
  return cfg;
}

std::uint64_t derive_seed(std::uint64_t base, SeedPurpose purpose, std::uint64_t size_index,
                          std::uint64_t replicate) {
  std::uint64_t h = splitmix64(base);
  h = splitmix64(h ^ static_cast<std::uint64_t>(purpose));
  h = splitmix64(h ^ size_index);
  h = splitmix64(h ^ replicate);
  return h;
}

double ExperimentResult::mean_nmse_db(int size_index, int gamma_index) const {
  double sum = 0.0;
  int count = 0;
  for (const CellResult& c : cells) {
    if (c.size_index != size_index || c.gamma_index != gamma_index || !c.ok) continue;
    sum += c.nmse.ratio;
    ++count;
  }
  if (count == 0) return std::numeric_limits<double>::quiet_NaN();
  const double ratio = sum / count;
  return ratio == 0.0 ? -std::numeric_limits<double>::infinity() : 10.0 * std::log10(ratio);
}

double ExperimentResult::mean_cost(int size_index, int gamma_index) const {
  double sum = 0.0;
  std::size_t count = 0;
  for (const CellResult& c : cells) {
    if (c.size_index != size_index || c.gamma_index != gamma_index || !c.ok) continue;
    for (double J : c.cost.per_trajectory) sum += J;
    count += c.cost.per_trajectory.size();
  }
  return count ? sum / static_cast<double>(count) : std::numeric_limits<double>::quiet_NaN();
}

std::vector<double> ExperimentResult::trajectory_costs(int size_index, int gamma_index) const {
  std::vector<double> sum;
  int count = 0;
  for (const CellResult& c : cells) {
    if (c.size_index != size_index || c.gamma_index != gamma_index || !c.ok) continue;
    if (sum.empty()) sum.assign(c.cost.per_trajectory.size(), 0.0);
    for (std::size_t k = 0; k < sum.size() && k < c.cost.per_trajectory.size(); ++k)
      sum[k] += c.cost.per_trajectory[k];
    ++count;
  }
  for (double& s : sum) s /= count;
  return sum;
}

int ExperimentResult::best_gamma_index(int size_index) const {
  int best = -1;
  double best_db = std::numeric_limits<double>::infinity();
  for (const CellResult& c : cells) {
    if (c.size_index != size_index || c.replicate != 0) continue;
    const double db = mean_nmse_db(size_index, c.gamma_index);
    if (!std::isnan(db) && (db < best_db || (db == best_db && c.gamma_index < best))) {
      best_db = db;
      best = c.gamma_index;
    }
  }
  return best;
}

int ExperimentResult::failures() const {
  int n = 0;
  for (const CellResult& c : cells) n += c.ok ? 0 : 1;
  return n;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentResult result;
  result.problem_hash = problem_hash(cfg.problem);
  result.cinf = max_control_invariant(cfg.problem.X, cfg.problem.U, cfg.problem.system.A,
                                      cfg.problem.system.B, cfg.cinf_max_iter);
  if (!result.cinf.converged)
    throw GeometryError("experiment: invariant set iteration did not converge");
  const HPolytope& c_inf = result.cinf.c_inf;
  const CondensedQp qp = condense(cfg.problem);

  result.initial_states =
      sample_states(c_inf, cfg.n_traj, derive_seed(cfg.base_seed, SeedPurpose::Trajectories));
  result.optimal_cost =
      closed_loop_cost(mpc_controller(qp, cfg.qp), cfg.problem, result.initial_states, cfg.steps);

  const int n_sizes = static_cast<int>(cfg.train_sizes.size());
  const int n_gammas = static_cast<int>(cfg.gammas.size());
  std::vector<Dataset> test_sets;
  for (int s = 0; s < n_sizes; ++s)
    test_sets.push_back(generate(cfg.problem, c_inf, cfg.test_size,
                                 derive_seed(cfg.base_seed, SeedPurpose::TestData, s),
                                 DatasetKind::Test, cfg.qp));

  for (int s = 0; s < n_sizes; ++s)
    for (int g = 0; g < n_gammas; ++g)
      for (int r = 0; r < cfg.networks_per_cell; ++r) {
        CellResult c;
        c.size_index = s;
        c.gamma_index = g;
        c.replicate = r;
        c.data_seed = derive_seed(cfg.base_seed, SeedPurpose::TrainData, s, r);
        c.train_seed = derive_seed(cfg.base_seed, SeedPurpose::Training, s, r);
        result.cells.push_back(c);
      }

  auto run_cell = [&](CellResult& c) {
    try {
      const Dataset train_ds =
          generate(cfg.problem, c_inf, cfg.train_sizes[static_cast<std::size_t>(c.size_index)],
                   c.data_seed, DatasetKind::Train, cfg.qp);
      TrainConfig tc = cfg.train;
      tc.gamma = cfg.gammas[static_cast<std::size_t>(c.gamma_index)];
      tc.seed = c.train_seed;
      const TrainReport report = train(train_ds, cfg.arch, tc);
      c.epochs = report.epochs_run;
      c.stop_reason = report.stop_reason;
      c.final_loss = report.loss_history.back();
      const Controller net = network_controller(report.final_params);
      c.nmse = test_nmse(net, test_sets[static_cast<std::size_t>(c.size_index)]);
      c.cost = closed_loop_cost(net, cfg.problem, result.initial_states, cfg.steps);
      c.ok = true;
    } catch (const std::exception& e) {
      c.ok = false;
      c.error = e.what();
    }
  };

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < result.cells.size(); i = next++) run_cell(result.cells[i]);
  };
  const int jobs = std::min<int>(cfg.jobs, static_cast<int>(result.cells.size()));
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return result;
}

namespace {

// Index of `value` in `list`, or -1.
template <class T>
int index_of(const std::vector<T>& list, T value) {
  const auto it = std::find(list.begin(), list.end(), value);
  return it == list.end() ? -1 : static_cast<int>(it - list.begin());
}

}  // namespace

void write_experiment_outputs(const ExperimentConfig& cfg, const ExperimentResult& result,
                              const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const auto path = [&](const char* name) { return (fs::path(out_dir) / name).string(); };
  const int n_sizes = static_cast<int>(cfg.train_sizes.size());
  const int n_gammas = static_cast<int>(cfg.gammas.size());
  const auto label = [&](int s) { return "S" + std::to_string(cfg.train_sizes[static_cast<std::size_t>(s)]); };

  {
    std::ostringstream os;
    os << "gamma,train_size,seed,nmse_db\n";
    for (const CellResult& c : result.cells) {
      if (!c.ok) continue;
      os << format_double(cfg.gammas[static_cast<std::size_t>(c.gamma_index)]) << ","
         << cfg.train_sizes[static_cast<std::size_t>(c.size_index)] << "," << c.data_seed << ","
         << (c.nmse.exact ? std::string("-inf") : format_double(c.nmse.db)) << "\n";
    }
    write_text_file(path("nmse.csv"), os.str());
  }
  {
    std::ostringstream os;
    os << "set_label,gamma,traj_index,J\n";
    for (int s = 0; s < n_sizes; ++s)
      for (int g = 0; g < n_gammas; ++g) {
        const auto costs = result.trajectory_costs(s, g);
        for (std::size_t k = 0; k < costs.size(); ++k)
          os << label(s) << "," << format_double(cfg.gammas[static_cast<std::size_t>(g)]) << ","
             << k << "," << format_double(costs[k]) << "\n";
      }
    for (std::size_t k = 0; k < result.optimal_cost.per_trajectory.size(); ++k)
      os << "MPC,,"
         << k << "," << format_double(result.optimal_cost.per_trajectory[k]) << "\n";
    write_text_file(path("cost.csv"), os.str());
  }

  std::ostringstream summary;
  summary << "set,train_size";
  for (double g : cfg.gammas) summary << ",nmse_db_gamma_" << format_double(g);
  summary << ",no_reg_db,best_reg_db,best_gamma\n";
  std::ostringstream table1;
  table1 << "| Set | NMSE [dB] (no regularization) | NMSE [dB] (regularization) | Best gamma |\n"
         << "|---|---|---|---|\n";
  const int g0 = index_of(cfg.gammas, 0.0);
  for (int s = 0; s < n_sizes; ++s) {
    summary << label(s) << "," << cfg.train_sizes[static_cast<std::size_t>(s)];
    int best_reg = -1;
    for (int g = 0; g < n_gammas; ++g) {
      const double db = result.mean_nmse_db(s, g);
      summary << "," << format_double(db);
      if (g != g0 && (best_reg < 0 || db < result.mean_nmse_db(s, best_reg))) best_reg = g;
    }
    const int best = result.best_gamma_index(s);
    const double no_reg = g0 >= 0 ? result.mean_nmse_db(s, g0) : std::nan("");
    const double reg = best_reg >= 0 ? result.mean_nmse_db(s, best_reg) : std::nan("");
    const std::string best_gamma =
        best >= 0 ? format_double(cfg.gammas[static_cast<std::size_t>(best)]) : "nan";
    summary << "," << format_double(no_reg) << "," << format_double(reg) << "," << best_gamma
            << "\n";
    table1 << "| " << label(s) << " | " << fmt(no_reg) << " | " << fmt(reg) << " | " << best_gamma
           << " |\n";
  }
  write_text_file(path("summary.csv"), summary.str());

  std::ostringstream table2;
  std::ostringstream cost_csv;
  cost_csv << "set_label,gamma,mean_J,violations\n";
  table2 << "| {Set, gamma} | J (avg. over " << cfg.n_traj << " test traj.) |\n|---|---|\n";
  for (int s = 0; s < n_sizes; ++s)
    for (int g = 0; g < n_gammas; ++g) {
      int violations = 0;
      for (const CellResult& c : result.cells)
        if (c.ok && c.size_index == s && c.gamma_index == g) violations += c.cost.violations;
      cost_csv << label(s) << "," << format_double(cfg.gammas[static_cast<std::size_t>(g)]) << ","
               << format_double(result.mean_cost(s, g)) << "," << violations << "\n";
    }
  cost_csv << "MPC,," << format_double(result.optimal_cost.mean) << ","
           << result.optimal_cost.violations << "\n";
  write_text_file(path("control_cost.csv"), cost_csv.str());

  const int g1 = index_of(cfg.gammas, 1.0);
  if (g1 >= 0 && g0 >= 0) {
    const auto smallest = static_cast<int>(
        std::min_element(cfg.train_sizes.begin(), cfg.train_sizes.end()) - cfg.train_sizes.begin());
    const auto largest = static_cast<int>(
        std::max_element(cfg.train_sizes.begin(), cfg.train_sizes.end()) - cfg.train_sizes.begin());
    table2 << "| {" << label(smallest) << ", 1} | " << fmt(result.mean_cost(smallest, g1)) << " |\n"
           << "| {" << label(largest) << ", 0} | " << fmt(result.mean_cost(largest, g0)) << " |\n";
  }
  table2 << "| MPC (optimal law) | " << fmt(result.optimal_cost.mean) << " |\n";

  std::ostringstream report;
  report << "# Experiment report\n\n"
         << "- problem hash: `" << result.problem_hash << "`\n"
         << "- base seed: " << cfg.base_seed << "\n"
         << "- invariant set: " << result.cinf.c_inf.rows() << " facets after "
         << result.cinf.iterations << " iterations\n"
         << "- networks per cell: " << cfg.networks_per_cell << ", hidden widths:";
  for (int w : cfg.arch.hidden) report << " " << w;
  report << "\n- failed cells: " << result.failures() << "\n\n"
         << "## Test NMSE (averaged over replicates)\n\n"
         << table1.str() << "\n## Control cost\n\n"
         << table2.str();
  if (result.failures() > 0) {
    report << "\n## Failures\n\n";
    for (const CellResult& c : result.cells)
      if (!c.ok)
        report << "- " << label(c.size_index) << ", gamma "
               << format_double(cfg.gammas[static_cast<std::size_t>(c.gamma_index)])
               << ", replicate " << c.replicate << ": " << c.error << "\n";
  }
  write_text_file(path("report.md"), report.str());
}

}  // namespace mpcgrad
