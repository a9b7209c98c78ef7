#include "mpcgrad/dataset.hpp"

#include "mpcgrad/errors.hpp"
#include "mpcgrad/json_io.hpp"
#include "mpcgrad/sampler.hpp"

#include <sstream>

namespace mpcgrad {

const char* to_string(DatasetKind kind) { return kind == DatasetKind::Train ? "train" : "test"; }

Dataset generate(const MpcProblem& problem, const HPolytope& c_inf, int n, std::uint64_t seed,
                 DatasetKind kind, const QpOptions& opts) {
  if (n < 1) throw ArgumentError("generate: n must be >= 1");
  if (c_inf.dim() != problem.state_dim())
    throw ArgumentError("generate: c_inf dimension does not match the problem");
  const CondensedQp qp = condense(problem);

  Dataset ds;
  ds.problem_hash = problem_hash(problem);
  ds.seed = seed;
  ds.kind = kind;
  ds.state_dim = problem.state_dim();
  ds.input_dim = problem.input_dim();
  ds.samples.reserve(static_cast<std::size_t>(n));
  for (const Vector& x : sample_states(c_inf, n, seed)) {
    const ControlSolution sol = qp_solve(qp, x, opts);
    if (sol.status != QpStatus::Optimal) {
      std::ostringstream os;
      os.precision(17);
      os << "generate: MPC infeasible at sampled state (" << x.transpose()
         << "); the invariant set does not match the problem";
      throw InfeasibleError(os.str());
    }
    ds.samples.push_back({x, sol.u0, sensitivity(qp, sol, x), sol.on_boundary});
  }
  return ds;
}

std::string dataset_to_string(const Dataset& ds) {
  const int n = ds.state_dim;
  const int m = ds.input_dim;
  Json meta;
  meta["version"] = "v1";
  meta["kind"] = to_string(ds.kind);
  meta["seed"] = ds.seed;
  meta["problem_hash"] = ds.problem_hash;
  meta["state_dim"] = n;
  meta["input_dim"] = m;
  meta["grad_shape"] = Json::array({m, n});
  meta["count"] = ds.samples.size();
  Json cols = Json::array();
  for (int i = 0; i < n; ++i) cols.push_back("x" + std::to_string(i + 1));
  for (int i = 0; i < m; ++i) cols.push_back("u" + std::to_string(i + 1));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      cols.push_back("du" + std::to_string(i + 1) + "/dx" + std::to_string(j + 1));
  cols.push_back("on_boundary");
  meta["columns"] = cols;

  std::string text = meta.dump(2);
  text.erase(text.size() - 2);  // trailing "\n}"
  text += ",\n  \"rows\": [";
  for (std::size_t s = 0; s < ds.samples.size(); ++s) {
    const SampleTriplet& t = ds.samples[s];
    text += s ? ",\n    [" : "\n    [";
    bool first = true;
    auto put = [&](double v) {
      if (!first) text += ",";
      text += format_double(v);
      first = false;
    };
    for (int i = 0; i < n; ++i) put(t.x(i));
    for (int i = 0; i < m; ++i) put(t.u(i));
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) put(t.u_grad(i, j));
    text += t.on_boundary ? ",1]" : ",0]";
  }
  text += ds.samples.empty() ? "]\n}\n" : "\n  ]\n}\n";
  return text;
}

namespace {

template <class T>
T field(const Json& j, const char* key, const std::string& source) {
  if (!j.contains(key)) throw ParseError(source + ": missing field '" + key + "'");
  try {
    return j[key].get<T>();
  } catch (const Json::exception&) {
    throw ParseError(source + ": field '" + key + "' has the wrong type");
  }
}

}  // namespace

Dataset dataset_from_string(const std::string& text, const std::string& source) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ParseError(source + ": " + e.what());
  }
  if (!j.is_object()) throw ParseError(source + ": expected a JSON object");
  const auto version = field<std::string>(j, "version", source);
  if (version != "v1") throw ParseError(source + ": unsupported version '" + version + "'");

  Dataset ds;
  const auto kind = field<std::string>(j, "kind", source);
  if (kind == "train")
    ds.kind = DatasetKind::Train;
  else if (kind == "test")
    ds.kind = DatasetKind::Test;
  else
    throw ParseError(source + ": field 'kind' must be 'train' or 'test'");
  ds.seed = field<std::uint64_t>(j, "seed", source);
  ds.problem_hash = field<std::string>(j, "problem_hash", source);
  ds.state_dim = field<int>(j, "state_dim", source);
  ds.input_dim = field<int>(j, "input_dim", source);
  const int n = ds.state_dim;
  const int m = ds.input_dim;
  if (n < 1 || m < 1) throw ParseError(source + ": state_dim and input_dim must be >= 1");
  const auto shape = field<std::vector<int>>(j, "grad_shape", source);
  if (shape != std::vector<int>{m, n})
    throw ParseError(source + ": field 'grad_shape' must be [input_dim, state_dim]");
  const auto count = field<std::size_t>(j, "count", source);
  if (!j.contains("rows") || !j["rows"].is_array())
    throw ParseError(source + ": missing array field 'rows'");
  const Json& rows = j["rows"];
  if (rows.size() != count) {
    std::ostringstream os;
    os << source << ": 'count' is " << count << " but 'rows' has " << rows.size() << " entries";
    throw ParseError(os.str());
  }

  const std::size_t width = static_cast<std::size_t>(n + m + m * n + 1);
  ds.samples.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    const Json& row = rows[s];
    const std::string where = source + ": rows[" + std::to_string(s) + "]";
    if (!row.is_array() || row.size() != width)
      throw ParseError(where + ": expected " + std::to_string(width) + " numbers");
    std::vector<double> v(width);
    for (std::size_t k = 0; k < width; ++k) {
      if (!row[k].is_number())
        throw ParseError(where + ": entry " + std::to_string(k) + " is not a number");
      v[k] = row[k].get<double>();
    }
    SampleTriplet t;
    t.x = Eigen::Map<const Vector>(v.data(), n);
    t.u = Eigen::Map<const Vector>(v.data() + n, m);
    t.u_grad.resize(m, n);
    for (int i = 0; i < m; ++i)
      for (int c = 0; c < n; ++c) t.u_grad(i, c) = v[static_cast<std::size_t>(n + m + i * n + c)];
    const double flag = v.back();
    if (flag != 0.0 && flag != 1.0) throw ParseError(where + ": on_boundary must be 0 or 1");
    t.on_boundary = flag == 1.0;
    ds.samples.push_back(std::move(t));
  }
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  write_text_file(path, dataset_to_string(ds));
}

Dataset load_dataset(const std::string& path) { return dataset_from_string(read_text_file(path), path); }

void require_problem(const Dataset& ds, const MpcProblem& problem) {
  const std::string expected = problem_hash(problem);
  if (ds.problem_hash != expected)
    throw HashMismatchError("dataset was generated for problem " + ds.problem_hash +
                            ", but the supplied problem hashes to " + expected +
                            "; regenerate the data for this problem");
}

}  // namespace mpcgrad
