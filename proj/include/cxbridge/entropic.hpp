#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cxbridge/measures.hpp"
#include "cxbridge/potentials.hpp"
#include "cxbridge/quadrature.hpp"

namespace cxbridge {

/// Posterior weights f_i*(y) = exp(U_i + <V_i, y>) / sum_j p_j exp(U_j + <V_j, y>).
///
/// p_i f_i*(y) is the conditional probability of atom i given the Gaussian
/// point y. Evaluation goes through a stabilized log-sum-exp.
class PosteriorWeights {
 public:
  PosteriorWeights(const DiscreteMeasure& measure, const DualPotentials& potentials);

  /// log sum_j p_j exp(U_j + <V_j, y>)
  double log_partition(std::span<const double> y) const;

  /// Fills out[i] = p_i f_i*(y); the entries sum to one.
  void probabilities(std::span<const double> y, std::span<double> out) const;

  /// Fills out[i] = log f_i*(y).
  void log_weights(std::span<const double> y, std::span<double> out) const;

  double log_weight(std::size_t i, std::span<const double> y) const;

  std::size_t atoms() const noexcept { return measure_.size(); }
  std::size_t dim() const noexcept { return measure_.dim(); }
  const DiscreteMeasure& measure() const noexcept { return measure_; }
  const DualPotentials& potentials() const noexcept { return potentials_; }

 private:
  void scores(std::span<const double> y, std::span<double> out) const;  // log p_i + U_i + <V_i, y>

  const DiscreteMeasure& measure_;
  const DualPotentials& potentials_;
  std::vector<double> log_p_;
};

/// g(U, V) = sum_i p_i (U_i + <V_i, x_i>) - E log sum_j p_j exp(U_j + <V_j, Y>)
double eval_g(const DualPotentials& potentials, const DiscreteMeasure& measure,
              const QuadratureRule& quad);

/// Gradient of g with the same layout as DualPotentials:
/// dU_i = p_i - E[p_i f_i*(Y)], dV_i = p_i x_i - E[Y p_i f_i*(Y)].
DualPotentials grad_g(const DualPotentials& potentials, const DiscreteMeasure& measure,
                      const QuadratureRule& quad);

/// Hessian of g in the atom-major ordering (U_0, V_0, U_1, V_1, ...):
/// -E[(diag pi - pi pi^T) kron (phi phi^T)] with phi = (1, Y).
Eigen::MatrixXd hessian_g(const DualPotentials& potentials, const DiscreteMeasure& measure,
                          const QuadratureRule& quad);

/// Orthogonal projection of a gradient onto the gauge subspace S.
DualPotentials project_gauge(const DualPotentials& direction, std::span<const double> weights);

struct ConstraintResiduals {
  std::vector<double> mass;  ///< |E f_i*(Y) - 1| per atom
  std::vector<double> mean;  ///< ||E[Y f_i*(Y)] - x_i|| per atom
  double max_mass = 0.0;
  double max_mean = 0.0;
  double identity = 0.0;     ///< max |sum_i p_i f_i*(y) - 1| over random probe points
};

/// Constraint class residuals under `quad`, plus the partition-of-unity
/// identity at 100 probe points drawn from `quad`'s reference law.
ConstraintResiduals verify_constraints(const DualPotentials& potentials, const DiscreteMeasure& measure,
                                       const QuadratureRule& quad, std::uint64_t seed = 99);

enum class FitStatus { converged, not_dominated_suspected, non_converged };

std::string to_string(FitStatus s);

struct FitConfig {
  double slack = 0.05;  ///< epsilon in (0, 1); used by callers to gate the fit
  double grad_tol = 1e-8;
  double norm_cap = 1e3;
  std::size_t max_iters = 200;
  Accuracy accuracy = Accuracy::high;

  void validate() const;
};

struct FitReport {
  double g = 0.0;
  double grad_norm = 0.0;
  ConstraintResiduals residuals;
  std::size_t iterations = 0;
  std::size_t gradient_steps = 0;  ///< iterations that fell back from Newton
  FitStatus status = FitStatus::non_converged;
};

struct FitResult {
  DualPotentials potentials;
  FitReport report;
};

/// Maximizes g over S by damped Newton steps from (0, 0).
///
/// Stops when the gradient restricted to S has norm <= grad_tol. If the
/// iterate norm passes norm_cap while g is still increasing over the last
/// ten iterates the status is not_dominated_suspected; running out of
/// iterations gives non_converged with the best iterate.
FitResult fit_potentials(const DiscreteMeasure& measure, const QuadratureRule& quad, const FitConfig& config);

FitResult fit_potentials(const DiscreteMeasure& measure, const GaussianReference& gref, const FitConfig& config);

/// One draw of (label, y): y ~ scale * N(0, I) exactly, label with
/// probability p_i f_i*(y).
struct LabeledPoint {
  std::size_t label = 0;
  std::vector<double> y;
};

LabeledPoint posterior_draw(const PosteriorWeights& weights, double scale, std::uint64_t seed,
                            std::uint64_t draw);

struct PosteriorSample {
  std::size_t dim = 1;
  std::vector<std::size_t> labels;
  std::vector<double> points;  ///< row-major, count x dim

  std::size_t size() const noexcept { return labels.size(); }
};

/// Draws `count` labeled points. Draw d uses the stream (seed, first + d), so
/// results do not depend on `threads`.
PosteriorSample sample_posterior(const DualPotentials& potentials, const DiscreteMeasure& measure,
                                 const GaussianReference& gref, std::size_t count, std::uint64_t seed,
                                 unsigned threads = 1, std::uint64_t first = 0);

/// Normalized 1-D density, kept as a log-density callable together with a
/// tabulation on a symmetric grid.
class ConditionalLaw {
 public:
  static constexpr std::size_t kGridPoints = 8193;

  /// `unnormalized` must be a concave log-density; `scale` bounds the width
  /// of the law (the density is (1/scale^2)-uniformly log-concave).
  ConditionalLaw(std::function<double(double)> unnormalized, double scale);

  static ConditionalLaw gaussian(double mean, double sd);

  double log_density(double y) const { return unnormalized_(y) - log_norm_; }
  double density(double y) const;

  double mean() const noexcept { return mean_; }
  double variance() const noexcept { return variance_; }
  double mode() const noexcept { return mode_; }
  /// Integral of the unnormalized density.
  double raw_mass() const noexcept;
  double log_normalizer() const noexcept { return log_norm_; }

  /// Grid [-R, R] with R = max(12, |mode| + 12 scale).
  double radius() const noexcept { return radius_; }
  const std::vector<double>& grid() const noexcept { return grid_; }
  const std::vector<double>& grid_density() const noexcept { return table_; }
  double grid_mass() const;

  /// Smallest finite-difference estimate of -(log density)'' over interior
  /// grid points.
  double min_log_curvature() const;

 private:
  std::function<double(double)> unnormalized_;
  double scale_;
  double mode_ = 0.0;
  double radius_ = 12.0;
  double log_norm_ = 0.0;
  double mean_ = 0.0;
  double variance_ = 1.0;
  std::vector<double> grid_;
  std::vector<double> table_;
};

/// Law of Y given label i: density f_i*(y) times the N(0, scale^2) density.
/// Requires dimension one.
ConditionalLaw conditional_density(const DualPotentials& potentials, const DiscreteMeasure& measure,
                                   const GaussianReference& gref, std::size_t i);

}  // namespace cxbridge
