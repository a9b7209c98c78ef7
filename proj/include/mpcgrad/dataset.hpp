#pragma once

#include "mpcgrad/mpc.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mpcgrad {

/// (x, u*(x), du*/dx) for one sampled state.
struct SampleTriplet {
  Vector x;
  Vector u;
  Matrix u_grad;  // m x n
  bool on_boundary = false;

  bool operator==(const SampleTriplet& o) const {
    return x == o.x && u == o.u && u_grad == o.u_grad && on_boundary == o.on_boundary;
  }
};

enum class DatasetKind { Train, Test };

struct Dataset {
  std::string problem_hash;
  std::vector<SampleTriplet> samples;
  std::uint64_t seed = 0;
  DatasetKind kind = DatasetKind::Train;
  int state_dim = 0;
  int input_dim = 0;

  bool operator==(const Dataset& o) const = default;
};

/**
 * Samples n states from c_inf by hit-and-run and labels each with the MPC
 * law and its KKT sensitivity. An infeasible state aborts with
 * InfeasibleError naming the state.
 */
Dataset generate(const MpcProblem& problem, const HPolytope& c_inf, int n, std::uint64_t seed,
                 DatasetKind kind, const QpOptions& opts = {});

/// Version "v1": JSON metadata with one flat numeric array per sample.
std::string dataset_to_string(const Dataset& ds);
/// `source` prefixes error messages.
Dataset dataset_from_string(const std::string& text, const std::string& source = "dataset");

void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

/// Throws HashMismatchError unless ds was generated for `problem`.
void require_problem(const Dataset& ds, const MpcProblem& problem);

const char* to_string(DatasetKind kind);

}  // namespace mpcgrad
