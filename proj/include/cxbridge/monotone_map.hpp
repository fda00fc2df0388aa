#pragma once

#include <cstddef>
#include <vector>

#include "cxbridge/entropic.hpp"

namespace cxbridge {

/// Nondecreasing piecewise-linear map on a strictly increasing grid, extended
/// affinely with the boundary slopes outside the grid.
class MonotoneMap1D {
 public:
  MonotoneMap1D(std::vector<double> grid, std::vector<double> values);

  /// Identity sampled on a uniform grid over [-span, span].
  static MonotoneMap1D identity(std::size_t points = 4097, double span = 10.0);

  double operator()(double x) const;

  /// Slope of the linear piece containing x (boundary slope outside).
  double slope_at(double x) const;

  double max_slope() const;
  double min_slope() const;

  const std::vector<double>& grid() const noexcept { return grid_; }
  const std::vector<double>& values() const noexcept { return values_; }
  double lower() const noexcept { return grid_.front(); }
  double upper() const noexcept { return grid_.back(); }
  bool inside(double x) const noexcept { return x >= grid_.front() && x <= grid_.back(); }
  /// True when the grid is uniform, which enables O(1) cell lookup.
  bool uniform() const noexcept { return uniform_; }

  /// Index of the cell [grid[j], grid[j+1]] containing x, clamped to the
  /// first and last cell.
  std::size_t cell(double x) const;

  /// E[F(G)] for G ~ N(0, 1), integrated exactly piece by piece.
  double gaussian_mean() const;

 private:
  std::vector<double> grid_;
  std::vector<double> values_;
  std::vector<double> slopes_;
  bool uniform_ = false;
  double inv_step_ = 0.0;
};

/// Monotone rearrangement F = F_law^{-1} o Phi sampled on `points` uniform
/// grid points over [-span, span]. Throws when the law has more than 1e-10 of
/// its mass outside its own tabulation range.
MonotoneMap1D caffarelli_map_1d(const ConditionalLaw& law, std::size_t points = 4097, double span = 10.0);

}  // namespace cxbridge
