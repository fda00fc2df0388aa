#include "cxbridge/potentials.hpp"

#include <cmath>

namespace cxbridge {

double DualPotentials::norm() const noexcept {
  double s = 0.0;
  for (double u : U) s += u * u;
  for (double v : V) s += v * v;
  return std::sqrt(s);
}

void DualPotentials::gauge_fix(std::span<const double> weights) {
  double c = 0.0, total = 0.0;
  std::vector<double> w(dim, 0.0);
  for (std::size_t i = 0; i < atoms; ++i) {
    total += weights[i];
    c += weights[i] * U[i];
    for (std::size_t d = 0; d < dim; ++d) w[d] += weights[i] * V[i * dim + d];
  }
  c /= total;
  for (auto& x : w) x /= total;
  for (std::size_t i = 0; i < atoms; ++i) {
    U[i] -= c;
    for (std::size_t d = 0; d < dim; ++d) V[i * dim + d] -= w[d];
  }
}

bool DualPotentials::is_gauge_fixed(std::span<const double> weights, double tol) const noexcept {
  double c = 0.0;
  std::vector<double> w(dim, 0.0);
  for (std::size_t i = 0; i < atoms; ++i) {
    c += weights[i] * U[i];
    for (std::size_t d = 0; d < dim; ++d) w[d] += weights[i] * V[i * dim + d];
  }
  double wn = 0.0;
  for (double x : w) wn += x * x;
  return std::abs(c) <= tol && std::sqrt(wn) <= tol;
}

}  // namespace cxbridge
