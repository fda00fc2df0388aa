#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace cxbridge {

/// Affine family (U_i, V_i), i = 1..m, V_i in R^n, scoring y as U_i + <V_i, y>.
///
/// Used both as the entropic dual potentials and as separating directions of
/// the convex-order test. The gauge subspace S is {sum p_i U_i = 0,
/// sum p_i V_i = 0}.
struct DualPotentials {
  std::size_t atoms = 0;
  std::size_t dim = 0;
  std::vector<double> U;  ///< m
  std::vector<double> V;  ///< m x n, row-major

  static DualPotentials zeros(std::size_t atoms, std::size_t dim) {
    return {atoms, dim, std::vector<double>(atoms, 0.0), std::vector<double>(atoms * dim, 0.0)};
  }

  std::span<const double> slope(std::size_t i) const noexcept { return {V.data() + i * dim, dim}; }

  double score(std::size_t i, std::span<const double> y) const noexcept {
    double s = U[i];
    for (std::size_t d = 0; d < dim; ++d) s += V[i * dim + d] * y[d];
    return s;
  }

  /// Euclidean norm of the stacked vector (U, V).
  double norm() const noexcept;

  /// Shifts all rows by the same (c, w) so that the result lies in S. The
  /// objective and the dual gap are invariant under this shift up to the
  /// quadrature mean residual.
  void gauge_fix(std::span<const double> weights);

  bool is_gauge_fixed(std::span<const double> weights, double tol = 1e-12) const noexcept;
};

}  // namespace cxbridge
