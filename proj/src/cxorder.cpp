#include "cxbridge/cxorder.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include "cxbridge/errors.hpp"
#include "cxbridge/numeric.hpp"
#include "cxbridge/rng.hpp"
#include "cxbridge/simplex.hpp"

namespace cxbridge {

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::dominated: return "dominated";
    case Verdict::not_dominated: return "not_dominated";
    case Verdict::inconclusive: return "inconclusive";
  }
  return "inconclusive";
}

double PlanResiduals::worst() const noexcept {
  return std::max({row, column, barycenter, std::max(0.0, -min_entry)});
}

double default_slack_tol(const QuadratureRule& quad) { return 10.0 * quad.moment_tol; }

namespace {

void require_same_dim(const DiscreteMeasure& measure, const QuadratureRule& quad) {
  if (measure.dim() != quad.dim)
    throw InputError("measure dimension " + std::to_string(measure.dim()) +
                     " does not match quadrature dimension " + std::to_string(quad.dim));
}

// Index of the best affine piece at y, ties to the lowest index.
std::size_t argmax_piece(const DualPotentials& z, std::span<const double> y, double& best) {
  std::size_t arg = 0;
  best = z.score(0, y);
  for (std::size_t i = 1; i < z.atoms; ++i) {
    const double s = z.score(i, y);
    if (s > best) {
      best = s;
      arg = i;
    }
  }
  return arg;
}

}  // namespace

PlanResiduals verify_plan(const MartingaleTransportPlan& plan, const DiscreteMeasure& measure,
                          const QuadratureRule& quad) {
  require_same_dim(measure, quad);
  if (plan.atoms != measure.size() || plan.nodes != quad.size())
    throw InputError("plan shape does not match measure and quadrature");
  const std::size_t m = plan.atoms, K = plan.nodes, n = quad.dim;
  PlanResiduals r;
  r.min_entry = plan.mass.empty() ? 0.0 : *std::min_element(plan.mass.begin(), plan.mass.end());
  for (std::size_t i = 0; i < m; ++i) {
    CompensatedSum mass;
    std::vector<CompensatedSum> bary(n);
    for (std::size_t k = 0; k < K; ++k) {
      const double v = plan(i, k);
      mass.add(v);
      const auto y = quad.node(k);
      for (std::size_t d = 0; d < n; ++d) bary[d].add(v * y[d]);
    }
    r.row = std::max(r.row, std::abs(mass.value() - measure.weight(i)));
    double sq = 0.0;
    const auto x = measure.atom(i);
    for (std::size_t d = 0; d < n; ++d) {
      const double e = bary[d].value() - measure.weight(i) * x[d];
      sq += e * e;
    }
    r.barycenter = std::max(r.barycenter, std::sqrt(sq));
  }
  for (std::size_t k = 0; k < K; ++k) {
    CompensatedSum col;
    for (std::size_t i = 0; i < m; ++i) col.add(plan(i, k));
    r.column = std::max(r.column, std::abs(col.value() - quad.weights[k]));
  }
  return r;
}

double dual_gap(const DualPotentials& direction, const DiscreteMeasure& measure,
                const QuadratureRule& quad) {
  require_same_dim(measure, quad);
  if (direction.atoms != measure.size() || direction.dim != measure.dim())
    throw InputError("direction shape does not match measure");
  CompensatedSum s;
  double best = 0.0;
  for (std::size_t k = 0; k < quad.size(); ++k) {
    argmax_piece(direction, quad.node(k), best);
    s.add(quad.weights[k] * best);
  }
  for (std::size_t i = 0; i < measure.size(); ++i)
    s.add(-measure.weight(i) * direction.score(i, measure.atom(i)));
  return s.value();
}

// ---------------------------------------------------------------------------
// LP route

DominationVerdict lp_martingale_feasible(const DiscreteMeasure& measure, const QuadratureRule& quad,
                                         double slack_tol, const LpOptions& options) {
  require_same_dim(measure, quad);
  if (!(slack_tol >= 0.0)) throw InputError("slack_tol must be nonnegative");
  const std::size_t m = measure.size(), n = quad.dim, K = quad.size();
  if (m > std::numeric_limits<std::uint16_t>::max()) throw InputError("too many atoms for the LP");

  // Rows: m mass rows, then for each (i, d) an upper and a lower barycenter
  // row. Each coordinate is loosened by slack_tol / (2 sqrt(n)), which keeps
  // the Euclidean residual of the recovered plan safely within slack_tol.
  const double coord_slack = 0.5 * slack_tol / std::sqrt(static_cast<double>(n));
  const std::size_t rows = m + 2 * m * n;
  auto upper_row = [&](std::size_t i, std::size_t d) { return m + 2 * (i * n + d); };
  std::vector<double> rhs(rows);
  for (std::size_t i = 0; i < m; ++i) {
    rhs[i] = measure.weight(i);
    for (std::size_t d = 0; d < n; ++d) {
      const double target = measure.weight(i) * measure.atom(i)[d];
      rhs[upper_row(i, d)] = target + coord_slack;
      rhs[upper_row(i, d) + 1] = target - coord_slack;
    }
  }
  lp::PhaseOneSimplex master(std::move(rhs));

  std::vector<double> column(rows, 0.0);
  for (std::size_t r = m; r < rows; ++r) {
    std::fill(column.begin(), column.end(), 0.0);
    column[r] = (r - m) % 2 == 0 ? 1.0 : -1.0;
    master.add_column(column);
  }
  const std::size_t slack_columns = rows - m;

  // Generated columns: each assigns every node to one atom.
  std::vector<std::vector<std::uint16_t>> pool;
  std::vector<std::size_t> pool_of;  // master column -> pool index (SIZE_MAX for slacks)
  pool_of.assign(slack_columns, std::numeric_limits<std::size_t>::max());
  const std::size_t pool_cap = std::max<std::size_t>(4 * rows + 64, (std::size_t{1} << 25) / std::max<std::size_t>(K, 1));

  DominationVerdict out;
  std::size_t pivot_budget = options.max_pivots;
  std::vector<std::uint16_t> assign(K);
  DualPotentials price = DualPotentials::zeros(m, n);
  bool feasible = false, priced_out = false;

  for (std::size_t round = 0; round <= options.max_rounds; ++round) {
    const std::size_t before = master.pivots();
    const auto outcome = master.optimize(pivot_budget);
    pivot_budget -= std::min(pivot_budget, master.pivots() - before);
    out.iterations = round;
    if (outcome == lp::PhaseOneSimplex::Outcome::pivot_limit) {
      out.note = "pivot limit reached";
      break;
    }
    if (master.infeasibility() <= 1e-14) {
      feasible = true;
      break;
    }
    if (round == options.max_rounds) {
      out.note = "column generation round limit reached";
      break;
    }

    const auto y = master.duals();
    for (std::size_t i = 0; i < m; ++i) {
      price.U[i] = y[i];
      for (std::size_t d = 0; d < n; ++d)
        price.V[i * n + d] = y[upper_row(i, d)] + y[upper_row(i, d) + 1];
    }
    std::fill(column.begin(), column.end(), 0.0);
    CompensatedSum gain;
    for (std::size_t k = 0; k < K; ++k) {
      const auto yk = quad.node(k);
      double best = 0.0;
      const std::size_t i = argmax_piece(price, yk, best);
      assign[k] = static_cast<std::uint16_t>(i);
      const double w = quad.weights[k];
      gain.add(w * best);
      column[i] += w;
      for (std::size_t d = 0; d < n; ++d) {
        column[upper_row(i, d)] += w * yk[d];
        column[upper_row(i, d) + 1] += w * yk[d];
      }
    }
    if (gain.value() <= 1e-12) {
      priced_out = true;
      out.note = "master optimal, no improving column";
      break;
    }

    if (pool.size() >= pool_cap) {
      const auto remap = master.compact([&](std::size_t j) { return j < slack_columns; });
      std::vector<std::vector<std::uint16_t>> kept;
      std::vector<std::size_t> kept_of(master.columns(), std::numeric_limits<std::size_t>::max());
      for (std::size_t j = 0; j < remap.size(); ++j) {
        if (remap[j] == std::numeric_limits<std::size_t>::max()) continue;
        if (pool_of[j] != std::numeric_limits<std::size_t>::max()) {
          kept_of[remap[j]] = kept.size();
          kept.push_back(std::move(pool[pool_of[j]]));
        }
      }
      pool = std::move(kept);
      pool_of = std::move(kept_of);
    }
    master.add_column(column);
    pool_of.push_back(pool.size());
    pool.push_back(assign);
  }
  out.infeasibility = master.infeasibility();

  if (feasible) {
    MartingaleTransportPlan plan{m, K, std::vector<double>(m * K, 0.0), slack_tol};
    const auto lambda = master.solution();
    for (std::size_t j = 0; j < lambda.size(); ++j) {
      if (lambda[j] <= 0.0 || pool_of[j] == std::numeric_limits<std::size_t>::max()) continue;
      const auto& a = pool[pool_of[j]];
      for (std::size_t k = 0; k < K; ++k) plan(a[k], k) += lambda[j] * quad.weights[k];
    }
    const auto res = verify_plan(plan, measure, quad);
    out.residuals = res;
    if (res.worst() <= slack_tol * (1.0 + 1e-9) + 1e-15) {
      out.status = Verdict::dominated;
      out.plan = std::move(plan);
    } else {
      out.status = Verdict::inconclusive;
      out.note = "recovered plan exceeds slack tolerance";
    }
    return out;
  }

  if (priced_out) {
    SeparatingDirection sep{price, 0.0};
    sep.direction.gauge_fix(measure.weights());
    const double nrm = sep.direction.norm();
    if (nrm > 0.0) {
      for (auto& u : sep.direction.U) u /= nrm;
      for (auto& v : sep.direction.V) v /= nrm;
      sep.gap = dual_gap(sep.direction, measure, quad);
    }
    out.status = sep.gap < -10.0 * quad.moment_tol ? Verdict::not_dominated : Verdict::inconclusive;
    if (out.status == Verdict::inconclusive) out.note = "infeasible master but certificate gap inside tolerance band";
    out.separator = std::move(sep);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dual route

namespace {

// Stacked coordinates (U, V) with the gauge projection and subgradient of h.
class GapObjective {
 public:
  GapObjective(const DiscreteMeasure& measure, const QuadratureRule& quad)
      : measure_(measure), quad_(quad), m_(measure.size()), n_(measure.dim()) {
    for (std::size_t i = 0; i < m_; ++i) pp_ += measure.weight(i) * measure.weight(i);
  }

  std::size_t size() const noexcept { return m_ * (1 + n_); }

  DualPotentials unpack(const std::vector<double>& z) const {
    DualPotentials p = DualPotentials::zeros(m_, n_);
    std::copy(z.begin(), z.begin() + static_cast<long>(m_), p.U.begin());
    std::copy(z.begin() + static_cast<long>(m_), z.end(), p.V.begin());
    return p;
  }

  // Orthogonal projection onto S.
  void project(std::vector<double>& z) const {
    const auto p = measure_.weights();
    for (std::size_t block = 0; block <= n_; ++block) {
      auto at = [&](std::size_t i) -> double& {
        return block == 0 ? z[i] : z[m_ + i * n_ + (block - 1)];
      };
      double dot = 0.0;
      for (std::size_t i = 0; i < m_; ++i) dot += p[i] * at(i);
      const double c = dot / pp_;
      for (std::size_t i = 0; i < m_; ++i) at(i) -= c * p[i];
    }
  }

  // h(z) and a subgradient (ties to the lowest piece).
  double eval(const std::vector<double>& z, std::vector<double>& g) const {
    const DualPotentials p = unpack(z);
    g.assign(size(), 0.0);
    double h = 0.0;
    for (std::size_t k = 0; k < quad_.size(); ++k) {
      const auto y = quad_.node(k);
      double best = 0.0;
      const std::size_t i = argmax_piece(p, y, best);
      const double w = quad_.weights[k];
      h += w * best;
      g[i] += w;
      for (std::size_t d = 0; d < n_; ++d) g[m_ + i * n_ + d] += w * y[d];
    }
    for (std::size_t i = 0; i < m_; ++i) {
      const double pi = measure_.weight(i);
      const auto x = measure_.atom(i);
      h -= pi * p.score(i, x);
      g[i] -= pi;
      for (std::size_t d = 0; d < n_; ++d) g[m_ + i * n_ + d] -= pi * x[d];
    }
    return h;
  }

 private:
  const DiscreteMeasure& measure_;
  const QuadratureRule& quad_;
  std::size_t m_, n_;
  double pp_ = 0.0;
};

double norm2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

void scale_to(std::vector<double>& v, double target) {
  const double nv = norm2(v);
  if (nv > 0.0)
    for (auto& x : v) x *= target / nv;
}

// Polyak steps towards the level (best - delta); delta grows after a success
// and shrinks after a run of failures.
struct LevelTracker {
  double best = std::numeric_limits<double>::infinity();
  double delta;
  std::size_t stall = 0;

  explicit LevelTracker(double delta0) : delta(delta0) {}

  bool record(double f) {
    if (f < best - 0.5 * delta) {
      best = f;
      stall = 0;
      delta *= 1.5;
      return true;
    }
    const bool improved = f < best;
    if (improved) best = f;
    if (++stall >= 15) {
      delta *= 0.5;
      stall = 0;
    }
    return improved;
  }
  double target() const noexcept { return best - delta; }
};

}  // namespace

DominationVerdict dual_domination_check(const DiscreteMeasure& measure, const QuadratureRule& quad,
                                        const DualCheckOptions& options) {
  require_same_dim(measure, quad);
  DominationVerdict out;
  if (!measure.is_centered(10.0 * quad.moment_tol)) {
    out.status = Verdict::not_dominated;
    out.min_gap = -std::numeric_limits<double>::infinity();
    out.note = "barycenter differs from the reference mean";
    return out;
  }
  if (measure.size() == 1) {
    out.status = Verdict::dominated;
    out.min_gap = std::numeric_limits<double>::infinity();
    out.note = "gauge subspace is trivial";
    return out;
  }
  const GapObjective obj(measure, quad);
  const std::size_t dim = obj.size();
  const double band = 10.0 * quad.moment_tol;
  std::vector<double> g;

  auto random_unit = [&](std::uint64_t stream) {
    StreamRng rng(options.seed, stream);
    std::vector<double> z(dim);
    for (auto& x : z) x = rng.normal();
    obj.project(z);
    scale_to(z, 1.0);
    return z;
  };

  double best_value = std::numeric_limits<double>::infinity();
  std::vector<double> best_dir;

  // Convex pass over the unit ball of S.
  {
    std::vector<double> z = random_unit(0);
    for (auto& x : z) x *= 0.5;
    LevelTracker level(0.1);
    std::vector<double> best_z = z;
    for (std::size_t it = 0; it < options.ball_iterations; ++it) {
      const double f = obj.eval(z, g);
      ++out.iterations;
      if (f < level.best) best_z = z;
      level.record(f);
      obj.project(g);
      const double gg = norm2(g);
      if (gg == 0.0) break;
      const double step = (f - level.target()) / (gg * gg);
      for (std::size_t j = 0; j < dim; ++j) z[j] -= step * g[j];
      if (norm2(z) > 1.0) scale_to(z, 1.0);
    }
    const double r = norm2(best_z);
    if (level.best < 0.0 && r > 1e-6) {
      best_value = level.best / r;
      best_dir = best_z;
      scale_to(best_dir, 1.0);
    }
  }

  // Restarts on the unit sphere of S.
  for (std::size_t rs = 0; rs < options.restarts; ++rs) {
    std::vector<double> z = random_unit(rs + 1);
    LevelTracker level(0.05);
    for (std::size_t it = 0; it < options.sphere_iterations; ++it) {
      const double f = obj.eval(z, g);
      ++out.iterations;
      if (f < best_value) {
        best_value = f;
        best_dir = z;
      }
      level.record(f);
      obj.project(g);
      double radial = 0.0;
      for (std::size_t j = 0; j < dim; ++j) radial += g[j] * z[j];
      for (std::size_t j = 0; j < dim; ++j) g[j] -= radial * z[j];
      const double gg = norm2(g);
      if (gg < 1e-15) break;
      const double step = std::min((f - level.target()) / (gg * gg), 0.5);
      for (std::size_t j = 0; j < dim; ++j) z[j] -= step * g[j];
      scale_to(z, 1.0);
    }
  }

  out.min_gap = best_value;
  SeparatingDirection sep{obj.unpack(best_dir), best_value};
  if (best_value > band) {
    out.status = Verdict::dominated;
  } else if (best_value < -band) {
    out.status = Verdict::not_dominated;
    out.separator = std::move(sep);
  } else {
    out.status = Verdict::inconclusive;
    out.note = "minimized gap inside tolerance band";
    out.separator = std::move(sep);
  }
  return out;
}

// ---------------------------------------------------------------------------

ScaleSearchResult max_dominated_scale(const DiscreteMeasure& measure, const ScaleSearchOptions& options) {
  if (!(options.tol > 0.0 && options.tol < 1.0)) throw InputError("bisection tol must lie in (0, 1)");
  ScaleSearchResult result;
  if (measure.size() == 1 && measure.is_centered(1e-12)) {
    result.scale = 0.0;
    return result;
  }
  const QuadratureRule base = build_quadrature(measure.dim(), 1.0, options.accuracy);
  auto probe = [&](double rho) {
    const QuadratureRule rule = base.rescaled(rho);
    const Verdict v = lp_martingale_feasible(measure, rule, default_slack_tol(rule)).status;
    result.trace.push_back({rho, v});
    return v == Verdict::dominated;
  };
  if (!probe(1.0)) {
    result.scale = 1.0;
    result.dominated = false;
    return result;
  }
  double lo = 0.0, hi = 1.0;
  while (hi - lo > options.tol) {
    const double mid = 0.5 * (lo + hi);
    (probe(mid) ? hi : lo) = mid;
  }
  result.scale = hi;
  return result;
}

}  // namespace cxbridge
