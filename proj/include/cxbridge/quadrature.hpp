#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace cxbridge {

enum class Accuracy { fast, standard, high };

Accuracy parse_accuracy(const std::string& name);
std::string to_string(Accuracy a);

enum class QuadratureKind { tensor_gauss, monte_carlo };

/// Discrete surrogate for expectations over Y ~ scale * N(0, I_dim).
///
/// Nodes are row-major (node k occupies [k*dim, (k+1)*dim)). Weights are
/// positive and sum to one.
struct QuadratureRule {
  std::size_t dim = 1;
  double scale = 1.0;
  std::vector<double> nodes;
  std::vector<double> weights;
  QuadratureKind kind = QuadratureKind::tensor_gauss;
  std::uint64_t seed = 0;       ///< Monte-Carlo only
  std::size_t per_axis = 0;     ///< tensor rules only
  double moment_tol = 1e-12;

  std::size_t size() const noexcept { return weights.size(); }
  std::span<const double> node(std::size_t k) const noexcept {
    return {nodes.data() + k * dim, dim};
  }

  /// Same rule for the reference law new_scale * N(0, I).
  QuadratureRule rescaled(double new_scale) const;
};

struct MomentResiduals {
  double mass;     ///< |sum w - 1|
  double mean;     ///< |sum w y|
  double second;   ///< max-entry |sum w y y^T - scale^2 I|
};

MomentResiduals moment_residuals(const QuadratureRule& rule);

/// Builds the reference rule.
///
/// Dimensions 1..3 use a tensor product of a symmetric one-dimensional Gauss
/// rule (64/128/256 nodes per axis for fast/standard/high); the 1-D rule is
/// the half-line Gauss rule for exp(-t^2/2) mirrored to both sides, so it is
/// exact for every function that is a polynomial of degree < per_axis on
/// each half-line (|y|, y_+, ...). Dimension 3 at high accuracy is rejected.
/// Higher dimensions use a moment-matched Monte-Carlo rule of 10^5 antithetic
/// nodes (moment_tol 1e-3) seeded by `seed`.
QuadratureRule build_quadrature(std::size_t dim, double scale, Accuracy accuracy,
                                std::uint64_t seed = 0x5eed);

/// Tensor rule with an explicit even per-axis node count.
QuadratureRule build_tensor_rule(std::size_t dim, double scale, std::size_t per_axis,
                                 double moment_tol = 1e-12);

/// Moment-matched Monte-Carlo rule with `count` (even) nodes.
QuadratureRule build_monte_carlo_rule(std::size_t dim, double scale, std::size_t count,
                                      std::uint64_t seed);

namespace gauss {

struct Rule1D {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Probabilists' Gauss-Hermite rule: weights sum to one, exact for
/// polynomials of degree < 2n against N(0,1).
Rule1D hermite(std::size_t n);

/// Gauss-Legendre rule on [-1, 1], weights sum to two.
Rule1D legendre(std::size_t n);

/// Gauss rule on [0, inf) for the weight exp(-t^2/2), weights sum to
/// sqrt(pi/2). Recurrence obtained by a discretized Stieltjes procedure.
Rule1D half_gaussian(std::size_t n);

/// Symmetric probability rule for N(0,1) with 2*half nodes built from
/// `half_gaussian(half)`.
Rule1D symmetric_normal(std::size_t half);

}  // namespace gauss

}  // namespace cxbridge
