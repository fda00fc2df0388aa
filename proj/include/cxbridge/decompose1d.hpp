#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include "cxbridge/entropic.hpp"
#include "cxbridge/monotone_map.hpp"

namespace cxbridge {

/// Maps with closed-form heat gradients.
struct NamedMap {
  enum class Kind { identity, affine, absolute };
  Kind kind = Kind::identity;
  double slope = 1.0;   ///< affine only
  double offset = 0.0;  ///< affine only

  static NamedMap identity() { return {}; }
  static NamedMap affine(double slope, double offset = 0.0) { return {Kind::affine, slope, offset}; }
  static NamedMap absolute() { return {Kind::absolute, 1.0, 0.0}; }
};

using SplitMap = std::variant<MonotoneMap1D, NamedMap>;

double evaluate(const SplitMap& psi, double x);
double lipschitz_bound(const SplitMap& psi);
/// E[psi(G)], G ~ N(0, 1).
double gaussian_mean(const SplitMap& psi);

/// sigma = d/dx E[psi(x + sqrt(1 - t) Z)].
///
/// Grid maps use a 64-node Gauss-Hermite rule on the Gaussian
/// integration-by-parts form E[psi(x + s Z) Z] / s, or the slope at x itself
/// once s = sqrt(1 - t) is below the grid spacing. Named maps use their closed forms. Throws for t outside [0, 1).
double heat_gradient(const SplitMap& psi, double t, double x);

struct SplitPathConfig {
  SplitMap psi = NamedMap::identity();
  double c_lip = 1.0;
  std::size_t steps = 4096;  ///< power of two
  std::uint64_t seed = 0;
  std::optional<double> mean;  ///< defaults to gaussian_mean(psi)

  void validate() const;
};

struct SplitSample {
  double g = 0.0;         ///< terminal Brownian point B_1
  double x = 0.0;
  double y = 0.0;
  double stoch_sum = 0.0;  ///< sum sigma dB
  double residual = 0.0;   ///< |psi(B_1) - mean - C (x + y) / 2|
  bool exited = false;     ///< path left the map grid
};

/// Path number `draw` of the construction. x and y are sums of
/// conditionally N(0, dt) increments, hence exactly standard normal.
SplitSample lipschitz_split_sample(const SplitPathConfig& cfg, std::uint64_t draw = 0);

/// Draws [first, first + count). Bitwise equal to calling
/// lipschitz_split_sample for each draw, for any thread count.
std::vector<SplitSample> lipschitz_split_batch(const SplitPathConfig& cfg, std::size_t count,
                                               unsigned threads = 1, std::uint64_t first = 0);

struct ThreeGaussianDraw {
  std::size_t label = 0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double s = 0.0;
  double g = 0.0;  ///< B_1
  double residual = 0.0;
  bool exited = false;
};

/// End-to-end sampler of (X, Y, Z) with X + Y + Z standard normal, for a
/// one-dimensional measure and potentials fitted against N(0, 1).
class ThreeGaussianSampler {
 public:
  ThreeGaussianSampler(const DiscreteMeasure& measure, const DualPotentials& potentials, std::size_t steps = 4096,
                       std::size_t map_points = 4097);

  ThreeGaussianDraw draw(std::uint64_t seed, std::uint64_t index) const;

  std::vector<ThreeGaussianDraw> batch(std::size_t count, std::uint64_t seed, unsigned threads = 1,
                                       std::uint64_t first = 0) const;

  const MonotoneMap1D& map(std::size_t i) const { return std::get<MonotoneMap1D>(maps_[i]); }
  std::size_t atoms() const noexcept { return maps_.size(); }
  /// E[F_i(G)] - x_i for every label.
  std::vector<double> mean_errors() const;

 private:
  DiscreteMeasure measure_;
  std::vector<SplitMap> maps_;
  std::size_t steps_;
};

}  // namespace cxbridge
