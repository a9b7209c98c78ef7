#include "mpcgrad/cli.hpp"
#include "mpcgrad/dataset.hpp"
#include "mpcgrad/invariant.hpp"
#include "mpcgrad/json_io.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

using namespace mpcgrad;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

const std::string kProblem = std::string(MPCGRAD_DATA_DIR) + "/double_integrator.json";

fs::path workdir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "mpcgrad_tests" / "cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string p(const fs::path& path) { return path.string(); }

// Shared cinf artifact for the later stages.
const fs::path& cinf_file() {
  static const fs::path file = [] {
    const fs::path dir = workdir("shared");
    const CliRun r = cli({"cinf", "--problem", kProblem, "--out", p(dir / "cinf.json")});
    EXPECT_EQ(r.code, 0) << r.err;
    return dir / "cinf.json";
  }();
  return file;
}

}  // namespace

TEST(Cli, UsageErrors) {
  EXPECT_EQ(cli({}).code, kExitUsage);
  EXPECT_EQ(cli({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(cli({"cinf"}).code, kExitUsage);
  EXPECT_EQ(cli({"--help"}).code, kExitOk);
  EXPECT_EQ(cli({"experiment"}).code, kExitUsage);
}

TEST(Cli, CinfWritesCertifiedSet) {
  const fs::path dir = workdir("cinf");
  const CliRun r = cli({"--seed", "3", "--out-dir", p(dir), "cinf", "--problem", kProblem});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(r.out.rfind("iteration,rows\n", 0), 0u);
  const Json j = read_json_file(p(dir / "cinf.json"));
  EXPECT_TRUE(j["converged"].get<bool>());
  EXPECT_EQ(j["seed"], 3);
  const MpcProblem prob = oracle::double_integrator();
  EXPECT_EQ(j["problem_hash"], problem_hash(prob));
  const HPolytope c = polytope_from_json(j);
  const HPolytope next = intersect(pre_set(c, prob.system.A, prob.system.B, prob.U), prob.X);
  EXPECT_TRUE(is_subset(next, c, {1e-7, 1e-8, 10000}));
  EXPECT_TRUE(is_subset(c, next, {1e-7, 1e-8, 10000}));
}

TEST(Cli, CinfIterationCapExitsNumerical) {
  const fs::path dir = workdir("cinf_cap");
  EXPECT_EQ(cli({"--out-dir", p(dir), "cinf", "--problem", kProblem, "--max-iter", "1"}).code,
            kExitNumerical);
}

TEST(Cli, MalformedJsonIsParseError) {
  const fs::path dir = workdir("malformed");
  write_text_file(p(dir / "bad.json"), "{\"A\": [[1, 1], [0, 1]],");
  const CliRun r = cli({"--out-dir", p(dir), "cinf", "--problem", p(dir / "bad.json")});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("bad.json"), std::string::npos) << r.err;
}

TEST(Cli, WrongShapeIsUsageError) {
  const fs::path dir = workdir("shape");
  Json j = read_json_file(kProblem);
  j["A"] = Json::array({Json::array({1.0, 1.0, 0.0}), Json::array({0.0, 1.0, 0.0})});
  write_text_file(p(dir / "p.json"), j.dump());
  const CliRun r = cli({"--out-dir", p(dir), "cinf", "--problem", p(dir / "p.json")});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_FALSE(r.err.empty());
}

TEST(Cli, MissingFile) {
  const fs::path dir = workdir("missing");
  EXPECT_EQ(cli({"cinf", "--problem", p(dir / "nope.json")}).code, kExitUsage);
}

TEST(Cli, SampleCsv) {
  const CliRun r = cli({"--seed", "5", "sample", "--polytope", p(cinf_file()), "--count", "10"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  std::istringstream is(r.out);
  std::string line;
  int lines = 0;
  while (std::getline(is, line)) ++lines;
  EXPECT_EQ(lines, 11);
  EXPECT_EQ(r.out.rfind("x1,x2\n", 0), 0u);
}

TEST(Cli, GenIsByteIdentical) {
  const fs::path dir = workdir("gen");
  for (const char* name : {"a.json", "b.json"})
    ASSERT_EQ(cli({"--seed", "11", "gen", "--problem", kProblem, "--cinf", p(cinf_file()), "--n",
                   "100", "--out", p(dir / name)})
                  .code,
              kExitOk);
  EXPECT_EQ(read_text_file(p(dir / "a.json")), read_text_file(p(dir / "b.json")));
  const Dataset ds = load_dataset(p(dir / "a.json"));
  EXPECT_EQ(ds.samples.size(), 100u);
  EXPECT_EQ(ds.seed, 11u);
}

TEST(Cli, HashMismatchRefused) {
  const fs::path dir = workdir("hash");
  Json j = read_json_file(kProblem);
  j["R"] = Json::array({Json::array({1.0})});
  write_text_file(p(dir / "other.json"), j.dump());
  const CliRun r = cli({"gen", "--problem", p(dir / "other.json"), "--cinf", p(cinf_file()), "--out",
                     p(dir / "x.json")});
  EXPECT_NE(r.code, kExitOk);
  EXPECT_NE(r.err.find("hash"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "x.json"));
}

TEST(Cli, TrainAndEvalPipeline) {
  const fs::path dir = workdir("pipeline");
  ASSERT_EQ(cli({"--seed", "1", "--out-dir", p(dir), "gen", "--problem", kProblem, "--cinf",
                 p(cinf_file()), "--n", "20"})
                .code,
            kExitOk);
  ASSERT_EQ(cli({"--seed", "2", "--out-dir", p(dir), "gen", "--problem", kProblem, "--cinf",
                 p(cinf_file()), "--n", "30", "--kind", "test"})
                .code,
            kExitOk);
  const CliRun t = cli({"--seed", "3", "--out-dir", p(dir), "train", "--data", p(dir / "train.json"),
                     "--gamma", "1", "--hidden", "8,8", "--epochs", "40"});
  ASSERT_EQ(t.code, kExitOk) << t.err;
  EXPECT_EQ(t.out.rfind("epochs,final_loss,stop_reason\n40,", 0), 0u) << t.out;
  const Json net = read_json_file(p(dir / "network.json"));
  EXPECT_EQ(net["seed"], 3);
  EXPECT_EQ(net["data_seed"], 1);
  EXPECT_EQ(net["gamma"], 1.0);
  EXPECT_EQ(net["problem_hash"], problem_hash(oracle::double_integrator()));
  const std::string history = read_text_file(p(dir / "network_loss.csv"));
  EXPECT_EQ(history.rfind("epoch,loss\n1,", 0), 0u);
  EXPECT_EQ(std::count(history.begin(), history.end(), '\n'), 41);

  // A second run with the same seed writes the same network.
  const fs::path again = workdir("pipeline_again");
  ASSERT_EQ(cli({"--seed", "3", "--out-dir", p(again), "train", "--data", p(dir / "train.json"),
                 "--gamma", "1", "--hidden", "8,8", "--epochs", "40"})
                .code,
            kExitOk);
  EXPECT_EQ(read_text_file(p(dir / "network.json")), read_text_file(p(again / "network.json")));

  const CliRun e = cli({"eval", "--problem", kProblem, "--cinf", p(cinf_file()), "--test",
                     p(dir / "test.json"), "--net", p(dir / "network.json"), "--net",
                     p(again / "network.json"), "--n-traj", "10"});
  ASSERT_EQ(e.code, kExitOk) << e.err;
  std::istringstream is(e.out);
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "network,metric,value");
  int rows = 0;
  while (std::getline(is, line)) {
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 2) << line;
    ++rows;
  }
  EXPECT_EQ(rows, 8);
}

TEST(Cli, TrainRejectsTestData) {
  const fs::path dir = workdir("train_kind");
  ASSERT_EQ(cli({"--out-dir", p(dir), "gen", "--problem", kProblem, "--cinf", p(cinf_file()),
                 "--n", "5", "--kind", "test"})
                .code,
            kExitOk);
  EXPECT_EQ(cli({"--out-dir", p(dir), "train", "--data", p(dir / "test.json")}).code, kExitUsage);
}

TEST(Cli, ExperimentSmallGrid) {
  const fs::path dir = workdir("experiment");
  Json cfg = read_json_file(std::string(MPCGRAD_DATA_DIR) + "/experiment.json");
  cfg["problem"] = kProblem;
  cfg["gammas"] = Json::array({0.0, 1.0});
  cfg["train_sizes"] = Json::array({10});
  cfg["networks_per_cell"] = 1;
  cfg["test_size"] = 10;
  cfg["n_traj"] = 5;
  cfg["hidden"] = Json::array({4});
  cfg["train"]["max_epochs"] = 10;
  write_text_file(p(dir / "cfg.json"), cfg.dump());
  const CliRun r = cli({"--config", p(dir / "cfg.json"), "--out-dir", p(dir / "out"), "experiment"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(r.out, read_text_file(p(dir / "out" / "summary.csv")));
  EXPECT_TRUE(fs::exists(dir / "out" / "report.md"));
}

TEST(Cli, BinaryExitCodes) {
  const std::string bin = MPCGRAD_CLI_PATH;
  const fs::path dir = workdir("binary");
  write_text_file(p(dir / "bad.json"), "{");
  const auto status = [](const std::string& cmd) {
    const int s = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  EXPECT_EQ(status(bin + " --out-dir " + p(dir) + " cinf --problem " + kProblem), 0);
  EXPECT_EQ(status(bin + " cinf --problem " + p(dir / "bad.json")), 2);
  EXPECT_EQ(status(bin + " no-such-command"), 2);
}
