#include "mpcgrad/sampler.hpp"

#include "mpcgrad/errors.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <random>

namespace mpcgrad {

namespace {

constexpr double kDirEps = 1e-14;

void require_bounded(const HPolytope& P) {
  for (int i = 0; i < P.dim(); ++i)
    for (Sense sense : {Sense::Max, Sense::Min})
      if (lp_solve(Vector::Unit(P.dim(), i), P, sense).status == LpStatus::Unbounded)
        throw GeometryError("hit_and_run: polytope is unbounded in coordinate " +
                            std::to_string(i + 1));
}

}  // namespace

std::vector<Vector> hit_and_run(const HPolytope& P, const SamplerConfig& cfg) {
  if (cfg.count < 1) throw ArgumentError("hit_and_run: count must be >= 1");
  if (cfg.burn_in < 0 || cfg.thinning < 1)
    throw ArgumentError("hit_and_run: burn_in must be >= 0 and thinning >= 1");

  require_bounded(P);
  Vector x;
  if (cfg.start) {
    if (cfg.start->size() != P.dim()) throw ArgumentError("hit_and_run: start has wrong dimension");
    if (!contains(P, *cfg.start, 1e-9)) throw ArgumentError("hit_and_run: start is outside P");
    x = *cfg.start;
  } else {
    x = chebyshev_center(P).center;
  }

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int n = P.dim();
  const Matrix& C = P.C();
  const Vector& d = P.d();

  auto step = [&]() {
    Vector dir(n);
    double norm = 0.0;
    while (norm < 1e-12) {
      for (int i = 0; i < n; ++i) dir(i) = normal(rng);
      norm = dir.norm();
    }
    dir /= norm;

    const Vector slope = C * dir;
    const Vector slack = (d - C * x).cwiseMax(0.0);
    double hi = std::numeric_limits<double>::infinity();
    double lo = -std::numeric_limits<double>::infinity();
    for (int r = 0; r < P.rows(); ++r) {
      if (slope(r) > kDirEps) {
        hi = std::min(hi, slack(r) / slope(r));
      } else if (slope(r) < -kDirEps) {
        lo = std::max(lo, slack(r) / slope(r));
      }
    }
    if (!std::isfinite(hi) || (cfg.two_sided && !std::isfinite(lo)))
      throw GeometryError("hit_and_run: polytope is unbounded along a sampled direction");

    const double from = cfg.two_sided ? lo : 0.0;
    // Uniform on [from, hi); uniform_real_distribution is half-open.
    std::uniform_real_distribution<double> length(from, hi);
    const double t = hi > from ? length(rng) : from;
    x += t * dir;
  };

  for (int i = 0; i < cfg.burn_in; ++i) step();
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(cfg.count));
  out.push_back(x);
  while (static_cast<int>(out.size()) < cfg.count) {
    for (int i = 0; i < cfg.thinning; ++i) step();
    out.push_back(x);
  }
  return out;
}

std::vector<Vector> sample_states(const HPolytope& c_inf, int n, std::uint64_t seed) {
  SamplerConfig cfg;
  cfg.seed = seed;
  cfg.count = n;
  return hit_and_run(c_inf, cfg);
}

void write_points_csv(std::ostream& os, const std::vector<Vector>& points) {
  const Eigen::Index n = points.empty() ? 0 : points.front().size();
  for (Eigen::Index i = 0; i < n; ++i) os << (i ? "," : "") << "x" << (i + 1);
  os << "\n";
  char buf[32];
  for (const Vector& p : points) {
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", p(i));
      os << (i ? "," : "") << buf;
    }
    os << "\n";
  }
}

}  // namespace mpcgrad
