#include "mpcgrad/cli.hpp"

#include "mpcgrad/errors.hpp"
#include "mpcgrad/experiment.hpp"
#include "mpcgrad/sampler.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace mpcgrad {
namespace {

namespace fs = std::filesystem;

struct Globals {
  std::uint64_t seed = 0;
  std::string config;
  std::string out_dir = ".";
  double act_tol = QpOptions{}.act_tol;
};

std::string out_path(const Globals& g, const std::string& explicit_path, const char* fallback) {
  if (!explicit_path.empty()) return explicit_path;
  fs::create_directories(g.out_dir);
  return (fs::path(g.out_dir) / fallback).string();
}

QpOptions qp_options(const Globals& g) {
  QpOptions o;
  o.act_tol = g.act_tol;
  return o;
}

MpcProblem load_problem(const std::string& path) { return problem_from_json(read_json_file(path)); }

/// Reads a C-infinity artifact and checks it was computed for `problem`.
HPolytope load_cinf(const std::string& path, const MpcProblem& problem) {
  const Json j = read_json_file(path);
  if (j.contains("problem_hash") && j["problem_hash"] != problem_hash(problem))
    throw HashMismatchError(path + ": problem_hash does not match the problem file");
  return polytope_from_json(j, path);
}

int cmd_cinf(const Globals& g, const std::string& problem_file, const std::string& out_file,
             int max_iter, std::ostream& out, std::ostream& err) {
  const MpcProblem problem = load_problem(problem_file);
  const InvariantResult r = max_control_invariant(problem.X, problem.U, problem.system.A,
                                                  problem.system.B, max_iter);
  Json j = polytope_to_json(r.c_inf);
  j["problem_hash"] = problem_hash(problem);
  j["seed"] = g.seed;
  j["converged"] = r.converged;
  j["iterations"] = r.iterations;
  Json log = Json::array();
  for (const auto& it : r.log) log.push_back({{"iteration", it.iteration}, {"rows", it.rows}});
  j["log"] = std::move(log);
  const std::string path = out_path(g, out_file, "cinf.json");
  write_text_file(path, j.dump(2) + "\n");
  out << "iteration,rows\n";
  for (const auto& it : r.log) out << it.iteration << "," << it.rows << "\n";
  if (!r.converged) {
    err << "cinf: no fixed point after " << r.iterations << " iterations\n";
    return kExitNumerical;
  }
  return kExitOk;
}

int cmd_sample(const Globals& g, const std::string& polytope_file, int count, bool two_sided,
               int burn_in, int thinning, const std::string& out_file, std::ostream& out) {
  const HPolytope P = polytope_from_json(read_json_file(polytope_file), polytope_file);
  SamplerConfig cfg;
  cfg.seed = g.seed;
  cfg.count = count;
  cfg.two_sided = two_sided;
  cfg.burn_in = burn_in;
  cfg.thinning = thinning;
  const auto points = hit_and_run(P, cfg);
  if (out_file.empty()) {
    write_points_csv(out, points);
  } else {
    std::ostringstream os;
    write_points_csv(os, points);
    write_text_file(out_file, os.str());
  }
  return kExitOk;
}

int cmd_gen(const Globals& g, const std::string& problem_file, const std::string& cinf_file,
            int n, const std::string& kind, const std::string& out_file) {
  const MpcProblem problem = load_problem(problem_file);
  const HPolytope c_inf = load_cinf(cinf_file, problem);
  const DatasetKind k = kind == "test" ? DatasetKind::Test : DatasetKind::Train;
  const Dataset ds = generate(problem, c_inf, n, g.seed, k, qp_options(g));
  save_dataset(ds, out_path(g, out_file, kind == "test" ? "test.json" : "train.json"));
  return kExitOk;
}

struct TrainArgs {
  std::string data;
  std::string out;
  double gamma = 0.0;
  std::vector<int> hidden;
  int epochs = -1;
  int batch = -1;
  double lr = -1.0;
  double target = -1.0;
};

int cmd_train(const Globals& g, const TrainArgs& a, std::ostream& out) {
  const Dataset ds = load_dataset(a.data);
  MlpArchitecture arch;
  arch.input_dim = ds.state_dim;
  arch.output_dim = ds.input_dim;
  TrainConfig tc;
  if (!g.config.empty()) {
    const Json j = read_json_file(g.config);
    if (j.contains("hidden")) arch.hidden = j["hidden"].get<std::vector<int>>();
    if (j.contains("train")) {
      const Json& t = j["train"];
      tc.batch_size = t.value("batch_size", tc.batch_size);
      tc.learning_rate = t.value("learning_rate", tc.learning_rate);
      tc.loss_target = t.value("loss_target", tc.loss_target);
      tc.max_epochs = t.value("max_epochs", tc.max_epochs);
    }
  }
  if (!a.hidden.empty()) arch.hidden = a.hidden;
  if (a.epochs > 0) tc.max_epochs = a.epochs;
  if (a.batch > 0) tc.batch_size = a.batch;
  if (a.lr > 0) tc.learning_rate = a.lr;
  if (a.target >= 0) tc.loss_target = a.target;
  tc.gamma = a.gamma;
  tc.seed = g.seed;

  const TrainReport report = train(ds, arch, tc);
  Json j = params_to_json(report.final_params);
  j["problem_hash"] = ds.problem_hash;
  j["seed"] = g.seed;
  j["data_seed"] = ds.seed;
  j["gamma"] = tc.gamma;
  j["epochs"] = report.epochs_run;
  j["stop_reason"] = to_string(report.stop_reason);
  j["final_loss"] = report.loss_history.back();
  const std::string net_path = out_path(g, a.out, "network.json");
  write_text_file(net_path, j.dump(2) + "\n");

  std::string history = "epoch,loss\n";
  for (std::size_t e = 0; e < report.loss_history.size(); ++e)
    history += std::to_string(e + 1) + "," + format_double(report.loss_history[e]) + "\n";
  std::filesystem::path hist_path(net_path);
  hist_path.replace_filename(hist_path.stem().string() + "_loss.csv");
  write_text_file(hist_path.string(), history);

  out << "epochs,final_loss,stop_reason\n"
      << report.epochs_run << "," << format_double(report.loss_history.back()) << ","
      << to_string(report.stop_reason) << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string problem;
  std::string cinf;
  std::string test;
  std::vector<std::string> nets;
  int n_traj = 100;
  int steps = 3;
  std::string out;
};

int cmd_eval(const Globals& g, const EvalArgs& a, std::ostream& out) {
  const MpcProblem problem = load_problem(a.problem);
  const HPolytope c_inf = load_cinf(a.cinf, problem);
  const Dataset test = load_dataset(a.test);
  require_problem(test, problem);
  const std::string hash = problem_hash(problem);

  std::ostringstream os;
  os << "network,metric,value\n";
  for (const std::string& net_file : a.nets) {
    const Json j = read_json_file(net_file);
    if (j.contains("problem_hash") && j["problem_hash"] != hash)
      throw HashMismatchError(net_file + ": problem_hash does not match the problem file");
    const MlpParams params = params_from_json(j);
    const SurrogateEvaluation ev =
        evaluate_surrogate(params, test, problem, c_inf, a.n_traj, a.steps, g.seed);
    const std::string name = fs::path(net_file).filename().string();
    os << name << ",nmse_ratio," << format_double(ev.nmse.ratio) << "\n"
       << name << ",nmse_db," << (ev.nmse.exact ? "-inf" : format_double(ev.nmse.db)) << "\n"
       << name << ",cost_mean," << format_double(ev.cost.mean) << "\n"
       << name << ",violations," << ev.cost.violations << "\n";
  }
  if (a.out.empty()) out << os.str();
  else write_text_file(a.out, os.str());
  return kExitOk;
}

int cmd_experiment(const Globals& g, bool seed_given, int jobs, std::ostream& out,
                   std::ostream& err) {
  if (g.config.empty()) throw ArgumentError("experiment: --config is required");
  ExperimentConfig cfg = load_experiment_config(g.config);
  if (seed_given) cfg.base_seed = g.seed;
  if (jobs > 0) cfg.jobs = jobs;
  cfg.qp.act_tol = g.act_tol;
  const ExperimentResult r = run_experiment(cfg);
  write_experiment_outputs(cfg, r, g.out_dir);
  out << read_text_file((fs::path(g.out_dir) / "summary.csv").string());
  if (r.failures() > 0) {
    err << "experiment: " << r.failures() << " cell(s) failed, see report.md\n";
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Neural surrogates of linear MPC trained on control-law gradients", "mpcgrad"};
  app.require_subcommand(1);
  Globals g;
  auto* seed_opt = app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--config", g.config, "JSON config file");
  app.add_option("--out-dir", g.out_dir, "Output directory")->capture_default_str();
  app.add_option("--act-tol", g.act_tol, "Active-set tolerance")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  auto* cinf = app.add_subcommand("cinf", "Maximal control invariant set");
  std::string problem_file, cinf_file, out_file;
  int max_iter = 100;
  cinf->add_option("--problem", problem_file, "Problem JSON")->required();
  cinf->add_option("--out", out_file, "Output file (default <out-dir>/cinf.json)");
  cinf->add_option("--max-iter", max_iter)->check(CLI::PositiveNumber)->capture_default_str();

  auto* sample = app.add_subcommand("sample", "Hit-and-run samples from a polytope");
  std::string polytope_file;
  int count = 1000, burn_in = 0, thinning = 1;
  bool two_sided = false;
  sample->add_option("--polytope", polytope_file, "Polytope JSON (e.g. cinf.json)")->required();
  sample->add_option("--count", count)->check(CLI::PositiveNumber)->capture_default_str();
  sample->add_flag("--two-sided", two_sided, "Step over the whole chord");
  sample->add_option("--burn-in", burn_in)->check(CLI::NonNegativeNumber);
  sample->add_option("--thinning", thinning)->check(CLI::PositiveNumber);
  sample->add_option("--out", out_file, "CSV file (default stdout)");

  auto* gen = app.add_subcommand("gen", "Generate a dataset of (x, u, du/dx)");
  int n = 100;
  std::string kind = "train";
  gen->add_option("--problem", problem_file)->required();
  gen->add_option("--cinf", cinf_file)->required();
  gen->add_option("--n", n)->check(CLI::PositiveNumber)->capture_default_str();
  gen->add_option("--kind", kind)->check(CLI::IsMember({"train", "test"}))->capture_default_str();
  gen->add_option("--out", out_file);

  auto* trn = app.add_subcommand("train", "Train a network on a dataset");
  TrainArgs ta;
  trn->add_option("--data", ta.data)->required();
  trn->add_option("--gamma", ta.gamma)->check(CLI::NonNegativeNumber)->capture_default_str();
  trn->add_option("--hidden", ta.hidden, "Hidden layer widths")->delimiter(',');
  trn->add_option("--epochs", ta.epochs, "Epoch cap")->check(CLI::PositiveNumber);
  trn->add_option("--batch", ta.batch)->check(CLI::PositiveNumber);
  trn->add_option("--lr", ta.lr)->check(CLI::PositiveNumber);
  trn->add_option("--loss-target", ta.target)->check(CLI::NonNegativeNumber);
  trn->add_option("--out", ta.out);

  auto* evl = app.add_subcommand("eval", "Test NMSE and closed-loop cost of networks");
  EvalArgs ea;
  evl->add_option("--problem", ea.problem)->required();
  evl->add_option("--cinf", ea.cinf)->required();
  evl->add_option("--test", ea.test)->required();
  evl->add_option("--net", ea.nets)->required();
  evl->add_option("--n-traj", ea.n_traj)->check(CLI::PositiveNumber)->capture_default_str();
  evl->add_option("--steps", ea.steps)->check(CLI::PositiveNumber)->capture_default_str();
  evl->add_option("--out", ea.out);

  auto* exp = app.add_subcommand("experiment", "Run the full training grid");
  int jobs = 0;
  exp->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    if (cinf->parsed()) return cmd_cinf(g, problem_file, out_file, max_iter, out, err);
    if (sample->parsed())
      return cmd_sample(g, polytope_file, count, two_sided, burn_in, thinning, out_file, out);
    if (gen->parsed()) return cmd_gen(g, problem_file, cinf_file, n, kind, out_file);
    if (trn->parsed()) return cmd_train(g, ta, out);
    if (evl->parsed()) return cmd_eval(g, ea, out);
    if (exp->parsed()) return cmd_experiment(g, seed_opt->count() > 0, jobs, out, err);
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const HashMismatchError& e) {
    err << "hash mismatch: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ArgumentError& e) {
    err << "invalid argument: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const fs::filesystem_error& e) {
    err << "file error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace mpcgrad
