#include "cxbridge/monotone_map.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "cxbridge/errors.hpp"
#include "cxbridge/numeric.hpp"
#include "cxbridge/quadrature.hpp"

namespace cxbridge {

MonotoneMap1D::MonotoneMap1D(std::vector<double> grid, std::vector<double> values)
    : grid_(std::move(grid)), values_(std::move(values)) {
  if (grid_.size() < 2 || grid_.size() != values_.size())
    throw InputError("monotone map needs at least two grid points and matching values");
  slopes_.resize(grid_.size() - 1);
  for (std::size_t j = 0; j + 1 < grid_.size(); ++j) {
    const double h = grid_[j + 1] - grid_[j];
    if (!(h > 0.0)) throw InputError("monotone map grid must be strictly increasing");
    if (values_[j + 1] < values_[j]) throw InputError("monotone map values must be nondecreasing");
    slopes_[j] = (values_[j + 1] - values_[j]) / h;
  }
  const double step = (grid_.back() - grid_.front()) / static_cast<double>(grid_.size() - 1);
  uniform_ = true;
  for (std::size_t j = 0; j < grid_.size() && uniform_; ++j)
    uniform_ = std::abs(grid_[j] - (grid_.front() + step * static_cast<double>(j))) <= 1e-12 * (1.0 + std::abs(grid_[j]));
  inv_step_ = 1.0 / step;
}

MonotoneMap1D MonotoneMap1D::identity(std::size_t points, double span) {
  std::vector<double> g(points);
  for (std::size_t j = 0; j < points; ++j)
    g[j] = -span + 2.0 * span * static_cast<double>(j) / static_cast<double>(points - 1);
  return MonotoneMap1D(g, g);
}

std::size_t MonotoneMap1D::cell(double x) const {
  const std::size_t last = slopes_.size() - 1;
  if (x <= grid_.front()) return 0;
  if (x >= grid_.back()) return last;
  std::size_t j;
  if (uniform_) {
    j = std::min(last, static_cast<std::size_t>((x - grid_.front()) * inv_step_));
    while (j > 0 && x < grid_[j]) --j;
    while (j < last && x >= grid_[j + 1]) ++j;
  } else {
    j = static_cast<std::size_t>(std::upper_bound(grid_.begin(), grid_.end(), x) - grid_.begin()) - 1;
    j = std::min(j, last);
  }
  return j;
}

double MonotoneMap1D::operator()(double x) const {
  if (x <= grid_.front()) return values_.front() + slopes_.front() * (x - grid_.front());
  if (x >= grid_.back()) return values_.back() + slopes_.back() * (x - grid_.back());
  const std::size_t j = cell(x);
  return values_[j] + slopes_[j] * (x - grid_[j]);
}

double MonotoneMap1D::slope_at(double x) const { return slopes_[cell(x)]; }

double MonotoneMap1D::max_slope() const { return *std::max_element(slopes_.begin(), slopes_.end()); }

double MonotoneMap1D::min_slope() const { return *std::min_element(slopes_.begin(), slopes_.end()); }

double MonotoneMap1D::gaussian_mean() const {
  // piece a + b x on [l, r] carrying Gaussian mass w: a w + b (phi(l) - phi(r))
  CompensatedSum s;
  auto piece = [&](double a, double b, double l, double r, double w) {
    const double pl = std::isinf(l) ? 0.0 : normal_pdf(l), pr = std::isinf(r) ? 0.0 : normal_pdf(r);
    s.add(a * w + b * (pl - pr));
  };
  const double inf = std::numeric_limits<double>::infinity();
  piece(values_.front() - slopes_.front() * grid_.front(), slopes_.front(), -inf, grid_.front(),
        normal_cdf(grid_.front()));
  for (std::size_t j = 0; j < slopes_.size(); ++j) {
    const double l = grid_[j], r = grid_[j + 1];
    // difference of Phi taken on the side where it is accurate
    const double w = l >= 0.0 ? normal_cdf(-l) - normal_cdf(-r) : normal_cdf(r) - normal_cdf(l);
    piece(values_[j] - slopes_[j] * l, slopes_[j], l, r, w);
  }
  piece(values_.back() - slopes_.back() * grid_.back(), slopes_.back(), grid_.back(), inf,
        normal_cdf(-grid_.back()));
  return s.value();
}

// ---------------------------------------------------------------------------

MonotoneMap1D caffarelli_map_1d(const ConditionalLaw& law, std::size_t points, double span) {
  if (points < 2 || !(span > 0.0)) throw InputError("map grid needs at least two points and a positive span");
  const double peak = law.log_density(law.mode());

  // Target range: where the log-density has fallen 90 below its peak.
  auto edge = [&](double dir) {
    double step = 0.25, y = law.mode();
    while (law.log_density(y) > peak - 90.0) {
      y += dir * step;
      step *= 1.25;
      if (std::abs(y - law.mode()) > 1e4) throw ResourceError("conditional law has too heavy tails for the map grid");
    }
    return y;
  };
  const double lo = edge(-1.0), hi = edge(1.0);
  if (law.grid_mass() < 1.0 - 1e-10 - 1e-12)
    throw InputError("law has more than 1e-10 of its mass outside its grid");

  static const gauss::Rule1D gl = gauss::legendre(8);
  auto cell_integral = [&](double a, double b) {
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    double s = 0.0;
    for (std::size_t k = 0; k < gl.nodes.size(); ++k) s += gl.weights[k] * law.density(mid + half * gl.nodes[k]);
    return half * s;
  };

  const std::size_t cells = 16384;
  const double h = (hi - lo) / static_cast<double>(cells);
  std::vector<double> edges(cells + 1), mass(cells), left(cells + 1, 0.0), right(cells + 1, 0.0);
  for (std::size_t j = 0; j <= cells; ++j) edges[j] = lo + h * static_cast<double>(j);
  for (std::size_t j = 0; j < cells; ++j) mass[j] = cell_integral(edges[j], edges[j + 1]);
  {
    CompensatedSum acc;
    for (std::size_t j = 0; j < cells; ++j) {
      acc.add(mass[j]);
      left[j + 1] = acc.value();
    }
  }
  {
    CompensatedSum acc;
    for (std::size_t j = cells; j-- > 0;) {
      acc.add(mass[j]);
      right[j] = acc.value();
    }
  }
  const double total = left[cells];
  for (auto& v : left) v /= total;
  for (auto& v : right) v /= total;

  // Solve target(t) = p inside cell j, with target the left CDF or the right
  // survival function.
  auto solve = [&](std::size_t j, double p, bool from_left) {
    const double a = edges[j], b = edges[j + 1];
    double t = a + (b - a) * 0.5, tl = a, tr = b;
    for (int it = 0; it < 60; ++it) {
      const double val = from_left ? left[j] + cell_integral(a, t) / total : right[j + 1] + cell_integral(t, b) / total;
      const double err = from_left ? val - p : p - val;  // increasing in t either way
      if (err > 0.0) tr = t; else tl = t;
      const double dens = law.density(t) / total;
      double next = dens > 0.0 ? t - err / dens : 0.5 * (tl + tr);
      if (!(next > tl && next < tr)) next = 0.5 * (tl + tr);
      if (std::abs(next - t) <= 1e-15 * (1.0 + std::abs(t))) {
        t = next;
        break;
      }
      t = next;
    }
    return t;
  };

  std::vector<double> grid(points), values(points);
  for (std::size_t k = 0; k < points; ++k) {
    const double x = -span + 2.0 * span * static_cast<double>(k) / static_cast<double>(points - 1);
    grid[k] = x;
    if (x <= 0.0) {
      const double p = normal_cdf(x);
      const auto it = std::upper_bound(left.begin(), left.end(), p);
      const std::size_t j = std::min<std::size_t>(cells - 1, static_cast<std::size_t>(std::max<long>(0, it - left.begin() - 1)));
      values[k] = solve(j, p, true);
    } else {
      const double q = normal_cdf(-x);
      // right is decreasing; find j with right[j+1] <= q < right[j]
      const auto it = std::upper_bound(right.begin(), right.end(), q, std::greater<double>());
      const std::size_t j = std::min<std::size_t>(cells - 1, static_cast<std::size_t>(std::max<long>(0, it - right.begin() - 1)));
      values[k] = solve(j, q, false);
    }
    if (k > 0) values[k] = std::max(values[k], values[k - 1]);
  }
  return MonotoneMap1D(std::move(grid), std::move(values));
}

}  // namespace cxbridge
