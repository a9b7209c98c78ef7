#pragma once

#include "mpcgrad/poly.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

namespace mpcgrad {

struct SamplerConfig {
  std::uint64_t seed = 0;
  int count = 1;
  /// Starting point; the Chebyshev center when unset.
  std::optional<Vector> start;
  /// Classical hit-and-run (symmetric step range) instead of forward-only steps.
  bool two_sided = false;
  int burn_in = 0;
  int thinning = 1;
};

/**
 * Hit-and-run chain over a bounded polytope.
 *
 * Each move draws a direction from normalized standard normals and a step
 * length uniformly from [0, t_max), where t_max is the distance to the
 * first facet hit along the direction. With two_sided the step is drawn
 * from [t_min, t_max) instead, which makes the chain uniform-stationary.
 * Point 0 of the output is the start when burn_in is 0.
 */
std::vector<Vector> hit_and_run(const HPolytope& P, const SamplerConfig& cfg);

/// n states from the forward-only chain started at the Chebyshev center.
std::vector<Vector> sample_states(const HPolytope& c_inf, int n, std::uint64_t seed);

/// CSV with header x1,...,xn and full-precision values.
void write_points_csv(std::ostream& os, const std::vector<Vector>& points);

}  // namespace mpcgrad
