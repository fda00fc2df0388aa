#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace cxbridge {

/// Finitely supported law sum_i p_i delta_{x_i} on R^n.
///
/// Atoms are stored row-major (atom i occupies [i*dim, (i+1)*dim)). The
/// constructor enforces positive weights summing to one within 1e-12 and
/// pairwise distinct atoms (max-norm separation above 1e-12). Use
/// `normalize_and_merge` to build a measure from raw user data.
class DiscreteMeasure {
 public:
  static constexpr double kMassTol = 1e-12;
  static constexpr double kAtomSeparation = 1e-12;

  DiscreteMeasure(std::size_t dim, std::vector<double> atoms, std::vector<double> weights);

  static DiscreteMeasure from_rows(const std::vector<std::vector<double>>& atoms,
                                   std::vector<double> weights);
  static DiscreteMeasure dirac(std::size_t dim);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return weights_.size(); }

  std::span<const double> atom(std::size_t i) const noexcept {
    return {atoms_.data() + i * dim_, dim_};
  }
  double weight(std::size_t i) const noexcept { return weights_[i]; }
  std::span<const double> weights() const noexcept { return weights_; }
  std::span<const double> atoms() const noexcept { return atoms_; }

  std::vector<double> barycenter() const;
  /// Euclidean norm of the barycenter is at most `tol`.
  bool is_centered(double tol = 1e-10) const;
  /// sum_i p_i |x_i|^2
  double second_moment() const;

 private:
  std::size_t dim_;
  std::vector<double> atoms_;
  std::vector<double> weights_;
};

/// Result of loading raw atoms/weights.
struct NormalizedMeasure {
  DiscreteMeasure measure;
  double weight_correction;  ///< sum of raw weights minus one
  std::size_t merged_atoms;  ///< atoms folded into an earlier near-duplicate
};

/// Normalizes nonnegative weights, drops zero-weight atoms, and merges atoms
/// closer than 1e-12 in max-norm (weights summed). Throws InputError on
/// negative or all-zero weights or ragged atoms.
NormalizedMeasure normalize_and_merge(std::size_t dim, const std::vector<std::vector<double>>& atoms,
                                      const std::vector<double>& weights);

/// Reference law rho * N(0, I_n).
struct GaussianReference {
  std::size_t dim;
  double scale;

  GaussianReference(std::size_t dim, double scale);
};

/// Disjoint index cells covering 0..m-1.
class Partition {
 public:
  Partition(std::vector<std::vector<std::size_t>> cells, std::size_t universe);

  static Partition singletons(std::size_t universe);
  static Partition whole(std::size_t universe);

  const std::vector<std::vector<std::size_t>>& cells() const noexcept { return cells_; }
  std::size_t universe() const noexcept { return universe_; }

 private:
  std::vector<std::vector<std::size_t>> cells_;
  std::size_t universe_;
};

/// Shifts every atom by the barycenter.
DiscreteMeasure center(const DiscreteMeasure& measure);

/// Conditional expectation onto the cells of `partition`: one atom per
/// nonempty cell at the cell's weighted barycenter, carrying the cell mass.
/// The result is dominated by the input in the convex order.
DiscreteMeasure coarsen_cx(const DiscreteMeasure& measure, const Partition& partition);

}  // namespace cxbridge
