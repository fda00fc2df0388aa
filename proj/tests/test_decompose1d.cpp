#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cxbridge/decompose1d.hpp"
#include "cxbridge/errors.hpp"
#include "cxbridge/numeric.hpp"
#include "cxbridge/stats.hpp"

using namespace cxbridge;

namespace {

double max_grid_error(const MonotoneMap1D& map, double slope, double shift) {
  double e = 0.0;
  for (std::size_t k = 0; k < map.grid().size(); ++k)
    e = std::max(e, std::abs(map.values()[k] - (slope * map.grid()[k] + shift)));
  return e;
}

}  // namespace

TEST(MonotoneMap, InterpolationAndExtension) {
  const MonotoneMap1D m({-1.0, 0.0, 2.0}, {-2.0, 0.0, 1.0});
  EXPECT_DOUBLE_EQ(m(-0.5), -1.0);
  EXPECT_DOUBLE_EQ(m(1.0), 0.5);
  EXPECT_DOUBLE_EQ(m(-3.0), -6.0);
  EXPECT_DOUBLE_EQ(m(4.0), 2.0);
  EXPECT_DOUBLE_EQ(m.slope_at(-0.2), 2.0);
  EXPECT_DOUBLE_EQ(m.slope_at(5.0), 0.5);
  EXPECT_DOUBLE_EQ(m.max_slope(), 2.0);
  EXPECT_THROW(MonotoneMap1D({0.0, 1.0}, {1.0, 0.0}), InputError);
  EXPECT_THROW(MonotoneMap1D({0.0, 0.0}, {0.0, 1.0}), InputError);
}

TEST(MonotoneMap, GaussianMeanIsExact) {
  EXPECT_NEAR(MonotoneMap1D::identity().gaussian_mean(), 0.0, 1e-16);
  const MonotoneMap1D m({-1.0, 0.0, 1.0}, {0.0, 0.0, 1.0});  // max(x, 0) clipped slope outside
  // E[max(G, 0)] with slope 1 to the right of 1 and 0 to the left of -1
  EXPECT_NEAR(m.gaussian_mean(), 1.0 / std::sqrt(2.0 * std::numbers::pi), 1e-15);
}

TEST(Caffarelli, StandardNormalIsIdentity) {
  const auto map = caffarelli_map_1d(ConditionalLaw::gaussian(0.0, 1.0));
  EXPECT_EQ(map.grid().size(), 4097u);
  EXPECT_LE(max_grid_error(map, 1.0, 0.0), 1e-9);
}

TEST(Caffarelli, TranslatedNormal) {
  const auto map = caffarelli_map_1d(ConditionalLaw::gaussian(0.7, 1.0));
  EXPECT_LE(max_grid_error(map, 1.0, 0.7), 1e-9);
  EXPECT_NEAR(map.gaussian_mean(), 0.7, 1e-12);
}

TEST(Caffarelli, ScaledNormal) {
  for (double s : {0.3, 0.8}) {
    const auto map = caffarelli_map_1d(ConditionalLaw::gaussian(0.0, s));
    EXPECT_LE(max_grid_error(map, s, 0.0), 1e-8) << s;
    EXPECT_LE(map.max_slope(), s + 1e-6);
  }
}

TEST(Caffarelli, FittedTwoPointConditionals) {
  const DiscreteMeasure mu(1, {-0.5, 0.5}, {0.5, 0.5});
  const GaussianReference gref(1, 1.0);
  const auto fit = fit_potentials(mu, gref, FitConfig{});
  for (std::size_t i = 0; i < 2; ++i) {
    const auto map = caffarelli_map_1d(conditional_density(fit.potentials, mu, gref, i));
    EXPECT_LE(map.max_slope(), 1.0 + 1e-3);
    EXPECT_GE(map.min_slope(), 0.0);
    EXPECT_NEAR(map.gaussian_mean(), mu.atom(i)[0], 1e-5);
  }
}

TEST(HeatGradient, ClosedForms) {
  for (double t : {0.0, 0.3, 0.9, 0.999})
    for (double x : {-2.0, 0.0, 0.4, 3.0}) {
      EXPECT_EQ(heat_gradient(NamedMap::identity(), t, x), 1.0);
      EXPECT_EQ(heat_gradient(NamedMap::affine(0.4, 2.0), t, x), 0.4);
      EXPECT_NEAR(heat_gradient(NamedMap::absolute(), t, x), 2.0 * normal_cdf(x / std::sqrt(1.0 - t)) - 1.0, 1e-15);
    }
  EXPECT_EQ(heat_gradient(NamedMap::absolute(), 0.5, 0.0), 0.0);
  EXPECT_THROW(heat_gradient(NamedMap::identity(), 1.0, 0.0), InputError);
}

TEST(HeatGradient, GridMapsMatchSmoothing) {
  // F(x) = x / 2 + 0.4 tanh(x), sigma = E[F'(x + s Z)]
  std::vector<double> g(4097), v(4097);
  for (std::size_t k = 0; k < g.size(); ++k) {
    g[k] = -10.0 + 20.0 * double(k) / 4096.0;
    v[k] = 0.5 * g[k] + 0.4 * std::tanh(g[k]);
  }
  const SplitMap psi = MonotoneMap1D(g, v);
  for (double t : {0.0, 0.5, 0.99})
    for (double x : {-1.0, 0.0, 0.3, 2.0}) {
      const double s = std::sqrt(1.0 - t);
      double ref = 0.0;
      const int n = 20000;
      for (int j = 0; j <= n; ++j) {
        const double z = -10.0 + 20.0 * j / n;
        const double c = (j == 0 || j == n) ? 1.0 : (j % 2 ? 4.0 : 2.0);
        const double th = std::tanh(x + s * z);
        ref += c * (0.5 + 0.4 * (1.0 - th * th)) * normal_pdf(z);
      }
      ref *= 20.0 / n / 3.0;
      EXPECT_NEAR(heat_gradient(psi, t, x), ref, 1e-5) << t << " " << x;
    }
  // below the grid spacing the slope itself is used
  const double t = 1.0 - 1e-6;
  EXPECT_EQ(heat_gradient(psi, t, 0.3), std::get<MonotoneMap1D>(psi).slope_at(0.3));
}

TEST(Split, IdentityIsDegenerate) {
  SplitPathConfig cfg;
  cfg.steps = 256;
  cfg.seed = 4;
  for (std::uint64_t d = 0; d < 20; ++d) {
    const auto s = lipschitz_split_sample(cfg, d);
    EXPECT_EQ(s.x, s.g);
    EXPECT_EQ(s.y, s.g);
    EXPECT_EQ(s.residual, 0.0);
  }
}

TEST(Split, SumIdentityAndReproducibility) {
  SplitPathConfig cfg;
  cfg.psi = NamedMap::absolute();
  cfg.steps = 512;
  cfg.seed = 9;
  const auto batch = lipschitz_split_batch(cfg, 64, 2);
  const auto other = lipschitz_split_batch(cfg, 64, 1);
  for (std::size_t d = 0; d < batch.size(); ++d) {
    const auto& s = batch[d];
    EXPECT_NEAR(s.x + s.y, 2.0 * s.stoch_sum / cfg.c_lip, 1e-14 * (1.0 + std::abs(s.stoch_sum)));
    EXPECT_EQ(s.residual, std::abs(std::abs(s.g) - std::sqrt(2.0 / std::numbers::pi) - 0.5 * (s.x + s.y)));
    const auto single = lipschitz_split_sample(cfg, d);
    EXPECT_EQ(single.x, s.x);
    EXPECT_EQ(single.y, s.y);
    EXPECT_EQ(other[d].x, s.x);
  }
}

TEST(Split, GridMapBatchMatchesSingleDraws) {
  SplitPathConfig cfg;
  cfg.psi = caffarelli_map_1d(ConditionalLaw::gaussian(0.2, 0.7));
  cfg.c_lip = 2.0;
  cfg.steps = 128;
  cfg.seed = 3;
  const auto batch = lipschitz_split_batch(cfg, 8, 2, 100);
  for (std::size_t d = 0; d < batch.size(); ++d) {
    const auto single = lipschitz_split_sample(cfg, 100 + d);
    EXPECT_EQ(single.x, batch[d].x);
    EXPECT_EQ(single.y, batch[d].y);
    EXPECT_EQ(single.residual, batch[d].residual);
  }
}

TEST(Split, RejectsInconsistentConfig) {
  SplitPathConfig cfg;
  cfg.psi = NamedMap::affine(3.0);
  EXPECT_THROW(lipschitz_split_sample(cfg), InputError);
  cfg.psi = NamedMap::identity();
  cfg.steps = 100;
  EXPECT_THROW(lipschitz_split_sample(cfg), InputError);
}

TEST(Split, AbsoluteValueMarginals) {
  SplitPathConfig cfg;
  cfg.psi = NamedMap::absolute();
  cfg.steps = 1024;
  cfg.seed = 21;
  const auto batch = lipschitz_split_batch(cfg, 4000);
  std::vector<double> xs, ys;
  for (const auto& s : batch) {
    xs.push_back(s.x);
    ys.push_back(s.y);
  }
  EXPECT_GT(ks_test_unsorted(xs).p_value, 0.01);
  EXPECT_GT(ks_test_unsorted(ys).p_value, 0.01);
}

TEST(ThreeGaussian, DiracCovariance) {
  const auto mu = DiscreteMeasure::dirac(1);
  const ThreeGaussianSampler sampler(mu, DualPotentials::zeros(1, 1), 256);
  EXPECT_LE(std::abs(sampler.mean_errors()[0]), 1e-9);
  const auto draws = sampler.batch(20000, 5);
  double yy = 0, zz = 0, yz = 0;
  for (const auto& d : draws) {
    EXPECT_EQ(d.x, 0.0);
    EXPECT_NEAR(d.s, d.y + d.z, 1e-15);
    yy += d.y * d.y;
    zz += d.z * d.z;
    yz += d.y * d.z;
  }
  const double n = double(draws.size());
  EXPECT_NEAR(yy / n, 1.0, 0.05);
  EXPECT_NEAR(zz / n, 1.0, 0.05);
  EXPECT_NEAR(yz / n, -0.5, 0.05);
}

TEST(ThreeGaussian, SlopesAllowTheSplit) {
  const DiscreteMeasure mu(1, {-0.5, 0.5}, {0.5, 0.5});
  const auto fit = fit_potentials(mu, GaussianReference(1, 1.0), FitConfig{});
  const ThreeGaussianSampler sampler(mu, fit.potentials, 256);
  for (std::size_t i = 0; i < 2; ++i) {
    const SplitMap psi = sampler.map(i);
    for (double t : {0.0, 0.5, 0.9})
      for (double x = -4.0; x <= 4.0; x += 0.5) {
        const double r = heat_gradient(psi, t, x) / 2.0;
        EXPECT_GE(std::sqrt(1.0 - r * r), std::sqrt(3.0) / 2.0 - 1e-4);
      }
  }
  const auto a = sampler.batch(4, 8, 1, 10);
  for (std::size_t d = 0; d < 4; ++d) EXPECT_EQ(sampler.draw(8, 10 + d).s, a[d].s);
}
