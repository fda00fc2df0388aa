#include "cxbridge/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cxbridge/errors.hpp"
#include "cxbridge/numeric.hpp"

namespace cxbridge {

double kolmogorov_survival(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 1.18) {
    // small-lambda form: sqrt(2 pi)/lambda sum exp(-(2k-1)^2 pi^2 / (8 lambda^2))
    const double c = std::numbers::pi * std::numbers::pi / (8.0 * lambda * lambda);
    double s = 0.0;
    for (int k = 1; k <= 20; ++k) s += std::exp(-(2.0 * k - 1.0) * (2.0 * k - 1.0) * c);
    return std::clamp(1.0 - std::sqrt(2.0 * std::numbers::pi) / lambda * s, 0.0, 1.0);
  }
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    s += (k % 2 ? 2.0 : -2.0) * term;
    if (term < 1e-300) break;
  }
  return std::clamp(s, 0.0, 1.0);
}

KsResult ks_test(std::span<const double> sorted) {
  const std::size_t n = sorted.size();
  if (n < 100) throw InputError("ks_test needs at least 100 samples");
  if (!std::is_sorted(sorted.begin(), sorted.end())) throw InputError("ks_test expects sorted samples");
  double d = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double f = normal_cdf(sorted[j]);
    d = std::max({d, static_cast<double>(j + 1) / static_cast<double>(n) - f, f - static_cast<double>(j) / static_cast<double>(n)});
  }
  KsResult r;
  r.statistic = d;
  r.count = n;
  r.p_value = kolmogorov_survival(std::sqrt(static_cast<double>(n)) * d);
  return r;
}

KsResult ks_test_unsorted(std::vector<double> samples) {
  std::sort(samples.begin(), samples.end());
  return ks_test(samples);
}

MeanEstimate mean_estimate(std::span<const double> values) {
  MeanEstimate e;
  e.count = values.size();
  if (values.empty()) return e;
  CompensatedSum s;
  for (double v : values) s.add(v);
  e.mean = s.value() / static_cast<double>(values.size());
  if (values.size() > 1) {
    CompensatedSum q;
    for (double v : values) q.add((v - e.mean) * (v - e.mean));
    e.std_error = std::sqrt(q.value() / static_cast<double>(values.size() - 1) / static_cast<double>(values.size()));
  }
  return e;
}

}  // namespace cxbridge
