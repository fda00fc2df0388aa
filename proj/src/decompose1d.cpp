#include "cxbridge/decompose1d.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cxbridge/errors.hpp"
#include "cxbridge/numeric.hpp"
#include "cxbridge/parallel.hpp"
#include "cxbridge/quadrature.hpp"
#include "cxbridge/rng.hpp"

namespace cxbridge {

double evaluate(const SplitMap& psi, double x) {
  if (const auto* m = std::get_if<MonotoneMap1D>(&psi)) return (*m)(x);
  const auto& n = std::get<NamedMap>(psi);
  switch (n.kind) {
    case NamedMap::Kind::identity: return x;
    case NamedMap::Kind::affine: return n.offset + n.slope * x;
    case NamedMap::Kind::absolute: return std::abs(x);
  }
  return x;
}

double lipschitz_bound(const SplitMap& psi) {
  if (const auto* m = std::get_if<MonotoneMap1D>(&psi)) return std::max(std::abs(m->max_slope()), std::abs(m->min_slope()));
  const auto& n = std::get<NamedMap>(psi);
  return n.kind == NamedMap::Kind::affine ? std::abs(n.slope) : 1.0;
}

double gaussian_mean(const SplitMap& psi) {
  if (const auto* m = std::get_if<MonotoneMap1D>(&psi)) return m->gaussian_mean();
  const auto& n = std::get<NamedMap>(psi);
  switch (n.kind) {
    case NamedMap::Kind::identity: return 0.0;
    case NamedMap::Kind::affine: return n.offset;
    case NamedMap::Kind::absolute: return std::sqrt(2.0 / std::numbers::pi);
  }
  return 0.0;
}

namespace {

const gauss::Rule1D& hermite64() {
  static const gauss::Rule1D rule = gauss::hermite(64);
  return rule;
}

double grid_spacing(const MonotoneMap1D& m) {
  return (m.upper() - m.lower()) / static_cast<double>(m.grid().size() - 1);
}

// d/dx E[F(x + sZ)] = E[F(x + sZ) Z] / s. The integrand is continuous, so
// the rule converges much faster than on the piecewise-constant slopes.
double smoothed_slope(const MonotoneMap1D& m, double s, double x) {
  const auto& gh = hermite64();
  double acc = 0.0;
  for (std::size_t q = 0; q < gh.nodes.size(); ++q) acc += gh.weights[q] * gh.nodes[q] * m(x + s * gh.nodes[q]);
  return acc / s;
}

}  // namespace

double heat_gradient(const SplitMap& psi, double t, double x) {
  if (!(t >= 0.0 && t < 1.0)) throw InputError("heat gradient needs t in [0, 1)");
  const double s = std::sqrt(1.0 - t);
  if (const auto* m = std::get_if<MonotoneMap1D>(&psi)) {
    if (s < grid_spacing(*m)) return m->slope_at(x);
    return smoothed_slope(*m, s, x);
  }
  const auto& n = std::get<NamedMap>(psi);
  switch (n.kind) {
    case NamedMap::Kind::identity: return 1.0;
    case NamedMap::Kind::affine: return n.slope;
    case NamedMap::Kind::absolute: return 2.0 * normal_cdf(x / s) - 1.0;
  }
  return 1.0;
}

void SplitPathConfig::validate() const {
  if (!(c_lip > 0.0)) throw InputError("C_Lip must be positive");
  if (steps == 0 || (steps & (steps - 1)) != 0) throw InputError("steps must be a power of two");
  if (lipschitz_bound(psi) > c_lip + 1e-6) throw InputError("map slope exceeds the declared Lipschitz constant");
}

// ---------------------------------------------------------------------------
// Path engine shared by the single-draw and batch routes.

namespace {

struct Path {
  StreamRng rng;
  double b = 0.0;
  double m = 0.0;
  double n = 0.0;
  bool exited = false;
};

// sigma along a path at time t and position x. For grid maps, values inside
// the grid are interpolated between heat gradients at the two neighbouring
// grid points; `entry(k)` supplies those (computed on demand or read from a
// per-step table). The two routes therefore produce identical numbers.
template <class Entry>
double path_sigma(const SplitMap& psi, double t, double x, Entry&& entry) {
  const auto* m = std::get_if<MonotoneMap1D>(&psi);
  if (!m) return heat_gradient(psi, t, x);
  const double s = std::sqrt(1.0 - t);
  if (s < grid_spacing(*m)) return m->slope_at(x);
  if (!m->inside(x)) return heat_gradient(psi, t, x);
  const std::size_t k = m->cell(x);
  const auto& g = m->grid();
  const double lam = (x - g[k]) / (g[k + 1] - g[k]);
  const double a = entry(k), b = entry(k + 1);
  return a + (b - a) * lam;
}

bool needs_table(const SplitMap& psi, double t) {
  const auto* m = std::get_if<MonotoneMap1D>(&psi);
  return m && std::sqrt(1.0 - t) >= grid_spacing(*m);
}

void advance(Path& p, double sigma, double c, double sqdt, const SplitMap& psi) {
  const double db = sqdt * p.rng.normal();
  const double dbp = sqdt * p.rng.normal();
  const double r = std::clamp(sigma / c, -1.0, 1.0);
  p.m += sigma * db;
  p.n += std::sqrt(std::max(0.0, 1.0 - r * r)) * dbp;
  p.b += db;
  if (const auto* m = std::get_if<MonotoneMap1D>(&psi); m && !m->inside(p.b)) p.exited = true;
}

double step_time(std::size_t j, std::size_t steps) { return static_cast<double>(j) / static_cast<double>(steps); }

// Per-step heat-gradient tables for grid maps, filled in parallel.
void fill_table(const SplitMap& psi, double t, std::vector<double>& table, unsigned threads) {
  const auto& m = std::get<MonotoneMap1D>(psi);
  table.resize(m.grid().size());
  parallel_for(table.size(), threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t k = b; k < e; ++k) table[k] = heat_gradient(psi, t, m.grid()[k]);
  });
}

}  // namespace

SplitSample lipschitz_split_sample(const SplitPathConfig& cfg, std::uint64_t draw) {
  return lipschitz_split_batch(cfg, 1, 1, draw).front();
}

std::vector<SplitSample> lipschitz_split_batch(const SplitPathConfig& cfg, std::size_t count, unsigned threads,
                                               std::uint64_t first) {
  cfg.validate();
  const double mean = cfg.mean.value_or(gaussian_mean(cfg.psi));
  const double sqdt = std::sqrt(1.0 / static_cast<double>(cfg.steps));
  std::vector<Path> paths;
  paths.reserve(count);
  for (std::size_t d = 0; d < count; ++d) paths.push_back(Path{StreamRng(cfg.seed, first + d)});

  std::vector<double> table;
  for (std::size_t j = 0; j < cfg.steps; ++j) {
    const double t = step_time(j, cfg.steps);
    const bool tabled = needs_table(cfg.psi, t) && count > 1;
    if (tabled) fill_table(cfg.psi, t, table, threads);
    parallel_for(count, threads, [&](std::size_t b, std::size_t e) {
      for (std::size_t d = b; d < e; ++d) {
        auto& p = paths[d];
        const double sigma =
            tabled ? path_sigma(cfg.psi, t, p.b, [&](std::size_t k) { return table[k]; })
                   : path_sigma(cfg.psi, t, p.b, [&](std::size_t k) {
                       return heat_gradient(cfg.psi, t, std::get<MonotoneMap1D>(cfg.psi).grid()[k]);
                     });
        advance(p, sigma, cfg.c_lip, sqdt, cfg.psi);
      }
    });
  }

  std::vector<SplitSample> out(count);
  for (std::size_t d = 0; d < count; ++d) {
    const auto& p = paths[d];
    auto& s = out[d];
    s.g = p.b;
    s.stoch_sum = p.m;
    s.x = p.m / cfg.c_lip + p.n;
    s.y = p.m / cfg.c_lip - p.n;
    s.residual = std::abs(evaluate(cfg.psi, p.b) - mean - 0.5 * cfg.c_lip * (s.x + s.y));
    s.exited = p.exited;
  }
  return out;
}

// ---------------------------------------------------------------------------

ThreeGaussianSampler::ThreeGaussianSampler(const DiscreteMeasure& measure, const DualPotentials& potentials,
                                           std::size_t steps, std::size_t map_points)
    : measure_(measure), steps_(steps) {
  if (measure.dim() != 1) throw InputError("the three-Gaussian sampler is one-dimensional");
  if (steps == 0 || (steps & (steps - 1)) != 0) throw InputError("steps must be a power of two");
  const GaussianReference gref(1, 1.0);
  for (std::size_t i = 0; i < measure.size(); ++i) {
    auto map = caffarelli_map_1d(conditional_density(potentials, measure, gref, i), map_points);
    if (lipschitz_bound(map) > 2.0) throw InputError("conditional map slope exceeds 2");
    maps_.emplace_back(std::move(map));
  }
}

std::vector<double> ThreeGaussianSampler::mean_errors() const {
  std::vector<double> e(maps_.size());
  for (std::size_t i = 0; i < maps_.size(); ++i) e[i] = gaussian_mean(maps_[i]) - measure_.atom(i)[0];
  return e;
}

ThreeGaussianDraw ThreeGaussianSampler::draw(std::uint64_t seed, std::uint64_t index) const {
  return batch(1, seed, 1, index).front();
}

std::vector<ThreeGaussianDraw> ThreeGaussianSampler::batch(std::size_t count, std::uint64_t seed, unsigned threads,
                                                           std::uint64_t first) const {
  constexpr double c = 2.0;
  const std::size_t m = maps_.size();
  const double sqdt = std::sqrt(1.0 / static_cast<double>(steps_));
  std::vector<Path> paths;
  std::vector<std::size_t> labels(count);
  std::vector<char> present(m, 0);
  paths.reserve(count);
  for (std::size_t d = 0; d < count; ++d) {
    Path p{StreamRng(seed, first + d)};
    const double u = p.rng.uniform();
    double cum = 0.0;
    std::size_t label = m - 1;
    for (std::size_t i = 0; i < m; ++i) {
      cum += measure_.weight(i);
      if (u < cum) {
        label = i;
        break;
      }
    }
    labels[d] = label;
    present[label] = 1;
    paths.push_back(p);
  }

  std::vector<std::vector<double>> tables(m);
  for (std::size_t j = 0; j < steps_; ++j) {
    const double t = step_time(j, steps_);
    const bool tabled = count > 1 && needs_table(maps_.front(), t);
    if (tabled)
      for (std::size_t i = 0; i < m; ++i)
        if (present[i]) fill_table(maps_[i], t, tables[i], threads);
    parallel_for(count, threads, [&](std::size_t b, std::size_t e) {
      for (std::size_t d = b; d < e; ++d) {
        const auto& psi = maps_[labels[d]];
        auto& p = paths[d];
        const double sigma =
            tabled ? path_sigma(psi, t, p.b, [&](std::size_t k) { return tables[labels[d]][k]; })
                   : path_sigma(psi, t, p.b, [&](std::size_t k) {
                       return heat_gradient(psi, t, std::get<MonotoneMap1D>(psi).grid()[k]);
                     });
        advance(p, sigma, c, sqdt, psi);
      }
    });
  }

  std::vector<ThreeGaussianDraw> out(count);
  for (std::size_t d = 0; d < count; ++d) {
    const auto& p = paths[d];
    auto& r = out[d];
    r.label = labels[d];
    r.x = measure_.atom(labels[d])[0];
    r.y = p.m / c + p.n;
    r.z = p.m / c - p.n;
    r.s = r.x + r.y + r.z;
    r.g = p.b;
    r.residual = std::abs(evaluate(maps_[labels[d]], p.b) - r.x - 0.5 * c * (r.y + r.z));
    r.exited = p.exited;
  }
  return out;
}

}  // namespace cxbridge
