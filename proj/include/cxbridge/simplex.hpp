#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace cxbridge::lp {

/// Phase-one revised simplex for the feasibility problem {x >= 0 : A x = b}.
///
/// Columns of A can be appended between calls to `optimize`, which makes the
/// class usable as the master problem of a column-generation loop. The
/// objective is the sum of one artificial variable per row; it is zero
/// exactly when the current column set admits a feasible point. The basis
/// inverse is kept dense and refactorized periodically.
class PhaseOneSimplex {
 public:
  enum class Outcome { optimal, pivot_limit };

  explicit PhaseOneSimplex(std::vector<double> rhs);

  std::size_t rows() const noexcept { return rhs_.size(); }
  std::size_t columns() const noexcept { return cols_.size(); }
  std::size_t pivots() const noexcept { return pivots_; }

  std::size_t add_column(std::span<const double> column);

  Outcome optimize(std::size_t max_pivots);

  /// Current sum of artificial variables.
  double infeasibility() const;

  /// Simplex multipliers in the orientation of the original rows. At an
  /// optimum with positive infeasibility they form a Farkas certificate:
  /// y.A_j <= 0 for every column and y.b = infeasibility() > 0.
  std::vector<double> duals() const;

  /// Phase-one reduced cost of a candidate column: -y.a.
  double reduced_cost(std::span<const double> column) const;

  /// Values of the structural columns.
  std::vector<double> solution() const;

  /// Removes nonbasic columns for which keep(j) is false. Returns the new
  /// index of every old column (or SIZE_MAX when removed).
  std::vector<std::size_t> compact(const std::function<bool(std::size_t)>& keep);

 private:
  void refactor();
  Eigen::VectorXd flipped_duals() const;

  std::vector<double> sign_;
  Eigen::VectorXd rhs_;
  std::vector<Eigen::VectorXd> cols_;
  std::vector<long> basis_;             // j >= 0 structural, -1-i artificial i
  std::vector<long> structural_pos_;    // basis row of structural j or -1
  std::vector<long> artificial_pos_;    // basis row of artificial i or -1
  Eigen::MatrixXd binv_;
  Eigen::VectorXd xb_;
  std::size_t pivots_ = 0;
  std::size_t since_refactor_ = 0;
};

}  // namespace cxbridge::lp
