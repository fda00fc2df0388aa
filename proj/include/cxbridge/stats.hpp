#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace cxbridge {

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t count = 0;
};

/// One-sample Kolmogorov-Smirnov test against N(0, 1). `sorted` must be in
/// nondecreasing order and hold at least 100 values. The p-value uses the
/// asymptotic Kolmogorov distribution at sqrt(n) D.
KsResult ks_test(std::span<const double> sorted);

/// Sorts a copy and runs ks_test.
KsResult ks_test_unsorted(std::vector<double> samples);

/// P(K > lambda) for the Kolmogorov distribution.
double kolmogorov_survival(double lambda);

struct MeanEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t count = 0;
};

MeanEstimate mean_estimate(std::span<const double> values);

}  // namespace cxbridge
