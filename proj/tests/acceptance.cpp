// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "cxbridge/combin.hpp"
#include "cxbridge/cxorder.hpp"
#include "cxbridge/decompose1d.hpp"
#include "cxbridge/entropic.hpp"
#include "cxbridge/stats.hpp"

using namespace cxbridge;

namespace {

using clock_type = std::chrono::steady_clock;

int failures = 0;

void report(int id, bool pass, const std::string& detail, clock_type::time_point start) {
  const double secs = std::chrono::duration<double>(clock_type::now() - start).count();
  std::printf("criterion %2d: %s  %s  [%.1f s]\n", id, pass ? "PASS" : "FAIL", detail.c_str(), secs);
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

// Centered random measure with m atoms in R^n, atoms scaled by `spread`.
DiscreteMeasure random_measure(std::mt19937_64& gen, std::size_t n, std::size_t m, double spread) {
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> uw(0.2, 1.0);
  std::vector<double> atoms(n * m), weights(m);
  double total = 0.0;
  for (auto& w : weights) total += (w = uw(gen));
  for (auto& w : weights) w /= total;
  for (auto& a : atoms) a = spread * nd(gen);
  return center(DiscreteMeasure(n, atoms, weights));
}

struct DominatedCase {
  DiscreteMeasure measure;
  double rho_star;
};

// Instances with threshold scale at most (1 - slack), i.e. dominated by
// (1 - slack) N(0, I).
std::vector<DominatedCase> dominated_cases(std::size_t count, std::size_t n, std::size_t max_atoms, double slack,
                                           Accuracy accuracy, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::vector<DominatedCase> out;
  while (out.size() < count) {
    const std::size_t m = 2 + gen() % (max_atoms - 1);
    const double spread = std::uniform_real_distribution<double>(0.15, 0.8)(gen);
    auto mu = random_measure(gen, n, m, spread);
    ScaleSearchOptions so;
    so.accuracy = accuracy;
    const auto s = max_dominated_scale(mu, so);
    if (s.dominated && s.scale <= 1.0 - slack) out.push_back({std::move(mu), s.scale});
  }
  return out;
}

DualPotentials random_potentials(std::mt19937_64& gen, std::size_t m, std::size_t n, double size) {
  std::normal_distribution<double> nd(0.0, size);
  auto p = DualPotentials::zeros(m, n);
  for (auto& u : p.U) u = nd(gen);
  for (auto& v : p.V) v = nd(gen);
  return p;
}

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// ---------------------------------------------------------------------------

void criterion1() {
  const auto t0 = clock_type::now();
  const FitConfig cfg;  // high accuracy, grad_tol 1e-8
  bool ok = true;
  double worst_grad = 0.0, worst_res1 = 0.0, worst_res2 = 0.0, worst_time = 0.0;
  const auto cases = dominated_cases(50, 1, 8, cfg.slack, Accuracy::high, 101);
  for (const auto& c : cases) {
    const auto s0 = clock_type::now();
    const auto fit = fit_potentials(c.measure, GaussianReference(1, 1.0), cfg);
    worst_time = std::max(worst_time, std::chrono::duration<double>(clock_type::now() - s0).count());
    const auto& r = fit.report;
    ok = ok && r.status == FitStatus::converged && r.grad_norm <= 1e-8;
    worst_grad = std::max(worst_grad, r.grad_norm);
    worst_res1 = std::max({worst_res1, r.residuals.max_mass, r.residuals.max_mean});
  }
  ok = ok && worst_res1 <= 1e-6;
  // two dimensions on tensor rules
  FitConfig cfg2 = cfg;
  const auto planar = dominated_cases(10, 2, 5, cfg.slack, Accuracy::fast, 102);
  for (const auto& c : planar) {
    const auto s0 = clock_type::now();
    const auto fit = fit_potentials(c.measure, GaussianReference(2, 1.0), cfg2);
    worst_time = std::max(worst_time, std::chrono::duration<double>(clock_type::now() - s0).count());
    ok = ok && fit.report.status == FitStatus::converged;
    worst_res2 = std::max({worst_res2, fit.report.residuals.max_mass, fit.report.residuals.max_mean});
  }
  ok = ok && worst_res2 <= 1e-4 && worst_time <= 5.0;
  report(1, ok,
         fmt("50 1-D fits: max grad %.1e, max residual %.1e; 10 2-D fits: max residual %.1e", worst_grad, worst_res1,
             worst_res2) +
             fmt("; slowest fit %.2f s", worst_time),
         t0);
}

void criterion2() {
  const auto t0 = clock_type::now();
  std::mt19937_64 gen(202);
  double worst = 0.0;
  for (int inst = 0; inst < 10; ++inst) {
    const std::size_t n = 1 + inst % 2;
    const auto mu = random_measure(gen, n, 2 + gen() % 5, 0.5);
    const auto quad = build_quadrature(n, 1.0, n == 1 ? Accuracy::high : Accuracy::standard);
    for (int pt = 0; pt < 2; ++pt) {
      auto pot = random_potentials(gen, mu.size(), n, 0.7);
      const auto g = grad_g(pot, mu, quad);
      std::vector<double> analytic, numeric;
      const double h = 1e-5;
      auto fd = [&](std::vector<double>& field, std::size_t k) {
        const double keep = field[k];
        field[k] = keep + h;
        const double up = eval_g(pot, mu, quad);
        field[k] = keep - h;
        const double down = eval_g(pot, mu, quad);
        field[k] = keep;
        return (up - down) / (2.0 * h);
      };
      for (std::size_t k = 0; k < pot.U.size(); ++k) {
        analytic.push_back(g.U[k]);
        numeric.push_back(fd(pot.U, k));
      }
      for (std::size_t k = 0; k < pot.V.size(); ++k) {
        analytic.push_back(g.V[k]);
        numeric.push_back(fd(pot.V, k));
      }
      std::vector<double> diff(analytic.size());
      for (std::size_t k = 0; k < diff.size(); ++k) diff[k] = analytic[k] - numeric[k];
      worst = std::max(worst, norm(diff) / std::max(1.0, norm(analytic)));
    }
  }
  report(2, worst <= 1e-6, fmt("20 points on 10 instances: max relative error %.2e", worst), t0);
}

void criterion3() {
  const auto t0 = clock_type::now();
  std::mt19937_64 gen(303);
  double worst_concavity = 0.0, worst_gauge = 0.0;
  bool gauge_ok = true;
  for (int pair = 0; pair < 50; ++pair) {
    const std::size_t n = 1 + pair % 2;
    const auto mu = random_measure(gen, n, 2 + gen() % 6, 0.6);
    const auto quad = build_quadrature(n, 1.0, n == 1 ? Accuracy::high : Accuracy::standard);
    const auto a = random_potentials(gen, mu.size(), n, 1.0);
    const auto b = random_potentials(gen, mu.size(), n, 1.0);
    auto mid = a;
    for (std::size_t k = 0; k < mid.U.size(); ++k) mid.U[k] = 0.5 * (a.U[k] + b.U[k]);
    for (std::size_t k = 0; k < mid.V.size(); ++k) mid.V[k] = 0.5 * (a.V[k] + b.V[k]);
    const double ga = eval_g(a, mu, quad), gb = eval_g(b, mu, quad), gm = eval_g(mid, mu, quad);
    worst_concavity = std::max(worst_concavity, 0.5 * (ga + gb) - gm);

    // shift every row by (c, w)
    std::normal_distribution<double> nd;
    const double c = nd(gen);
    std::vector<double> w(n);
    for (auto& x : w) x = nd(gen);
    auto shifted = a;
    for (std::size_t i = 0; i < mu.size(); ++i) {
      shifted.U[i] += c;
      for (std::size_t d = 0; d < n; ++d) shifted.V[i * n + d] += w[d];
    }
    const auto bary = mu.barycenter();
    const double bound = norm(w) * (moment_residuals(quad).mean + norm(bary)) + 1e-12 * (1.0 + std::abs(ga));
    const double change = std::abs(eval_g(shifted, mu, quad) - ga);
    worst_gauge = std::max(worst_gauge, change);
    gauge_ok = gauge_ok && change <= bound;
  }
  report(3, worst_concavity <= 1e-10 && gauge_ok,
         fmt("50 pairs: max midpoint violation %.1e; max gauge change %.1e", worst_concavity, worst_gauge) +
             (gauge_ok ? " (within the mean-residual bound)" : " (exceeds the mean-residual bound)"),
         t0);
}

void criterion4() {
  const auto t0 = clock_type::now();
  std::mt19937_64 gen(404);
  int compared = 0, agree = 0, dominated = 0, excluded = 0, tries = 0;
  while (compared < 100 && tries < 400) {
    ++tries;
    const std::size_t n = tries % 4 == 0 ? 2 : 1;
    const auto quad = build_quadrature(n, 1.0, n == 1 ? Accuracy::high : Accuracy::fast);
    const double spread = std::uniform_real_distribution<double>(0.3, 1.4)(gen);
    const auto mu = random_measure(gen, n, 2 + gen() % 5, spread);
    const auto dual = dual_domination_check(mu, quad);
    if (std::abs(dual.min_gap) <= 20.0 * quad.moment_tol) {
      ++excluded;
      continue;
    }
    const auto lp = lp_martingale_feasible(mu, quad, default_slack_tol(quad));
    ++compared;
    agree += lp.status == dual.status ? 1 : 0;
    dominated += lp.status == Verdict::dominated ? 1 : 0;
  }
  report(4, compared == 100 && agree == compared,
         fmt("%g instances compared (%g dominated), agreement %g", compared, dominated, agree) +
             fmt(", %g excluded by the gap band", excluded),
         t0);
}

void criterion5() {
  const auto t0 = clock_type::now();
  bool ok = true;
  std::string detail;
  for (double a : {0.2, 0.5, 0.7}) {
    const DiscreteMeasure mu(1, {-a, a}, {0.5, 0.5});
    const double expect = std::min(1.0, a * std::sqrt(std::numbers::pi / 2.0));
    const auto r = max_dominated_scale(mu);
    const double err = std::abs(r.scale - expect);
    ok = ok && r.dominated && err <= 1e-3;
    detail += fmt("a=%.1f: %.5f vs %.5f; ", a, r.scale, expect);
  }
  report(5, ok, detail, t0);
}

void criterion6() {
  const auto t0 = clock_type::now();
  const auto cases = dominated_cases(10, 1, 6, 0.05, Accuracy::high, 606);
  bool ok = true;
  double worst_z = 0.0;
  std::size_t labels = 0;
  for (std::size_t c = 0; c < cases.size(); ++c) {
    // alternate one- and two-dimensional instances
    DiscreteMeasure mu = cases[c].measure;
    std::size_t n = 1;
    if (c % 2 == 1) {
      mu = dominated_cases(1, 2, 5, 0.05, Accuracy::fast, 6000 + c).front().measure;
      n = 2;
    }
    const GaussianReference gref(n, 1.0);
    const auto fit = fit_potentials(mu, gref, FitConfig{});
    ok = ok && fit.report.status == FitStatus::converged;
    const auto sample = sample_posterior(fit.potentials, mu, gref, 1'000'000, 6 + c);
    for (std::size_t i = 0; i < mu.size(); ++i) {
      for (std::size_t d = 0; d < n; ++d) {
        std::vector<double> v;
        for (std::size_t k = 0; k < sample.size(); ++k)
          if (sample.labels[k] == i) v.push_back(sample.points[k * n + d]);
        const auto e = mean_estimate(v);
        const double z = std::abs(e.mean - mu.atom(i)[d]) / e.std_error;
        worst_z = std::max(worst_z, z);
        ok = ok && z <= 4.0;
      }
      ++labels;
    }
  }
  report(6, ok, fmt("10 instances, %g labels, 1e6 draws each: max |z| %.2f", double(labels), worst_z), t0);
}

void criterion7() {
  const auto t0 = clock_type::now();
  const auto cases = dominated_cases(50, 1, 8, 0.05, Accuracy::high, 707);
  const GaussianReference gref(1, 1.0);
  double worst_slope = 0.0;
  bool ok = true;
  for (const auto& c : cases) {
    const auto fit = fit_potentials(c.measure, gref, FitConfig{});
    ok = ok && fit.report.status == FitStatus::converged;
    for (std::size_t i = 0; i < c.measure.size(); ++i) {
      const auto map = caffarelli_map_1d(conditional_density(fit.potentials, c.measure, gref, i));
      worst_slope = std::max(worst_slope, map.max_slope());
    }
  }
  ok = ok && worst_slope <= 1.0 + 1e-3;
  double worst_closed = 0.0;
  for (double mean : {-0.8, 0.0, 0.4})
    for (double sd : {0.25, 0.6, 1.0}) {
      const auto map = caffarelli_map_1d(ConditionalLaw::gaussian(mean, sd));
      for (std::size_t k = 0; k < map.grid().size(); ++k)
        worst_closed = std::max(worst_closed, std::abs(map.values()[k] - (mean + sd * map.grid()[k])));
    }
  ok = ok && worst_closed <= 1e-8;
  report(7, ok, fmt("50 instances: max slope %.6f; Gaussian closed forms: max error %.1e", worst_slope, worst_closed),
         t0);
}

void criterion8() {
  const auto t0 = clock_type::now();
  SplitPathConfig cfg;
  cfg.psi = NamedMap::absolute();
  cfg.c_lip = 1.0;
  cfg.seed = 808;
  double median[3];
  double px = 0.0, py = 0.0;
  const std::size_t steps[3] = {256, 1024, 4096};
  for (int k = 0; k < 3; ++k) {
    cfg.steps = steps[k];
    const auto batch = lipschitz_split_batch(cfg, 20000);
    std::vector<double> xs, ys, res;
    for (const auto& s : batch) {
      xs.push_back(s.x);
      ys.push_back(s.y);
      res.push_back(s.residual);
    }
    std::nth_element(res.begin(), res.begin() + res.size() / 2, res.end());
    median[k] = res[res.size() / 2];
    if (steps[k] == 4096) {
      px = ks_test_unsorted(xs).p_value;
      py = ks_test_unsorted(ys).p_value;
    }
  }
  const double r1 = median[0] / median[1], r2 = median[1] / median[2];
  const bool ok = px >= 0.01 && py >= 0.01 && r1 >= 1.5 && r2 >= 1.5;
  report(8, ok,
         fmt("KS p-values x %.3f, y %.3f; ", px, py) +
             fmt("median residual %.2e -> %.2e -> %.2e", median[0], median[1], median[2]) +
             fmt(" (ratios %.2f, %.2f)", r1, r2),
         t0);
}

void criterion9() {
  const auto t0 = clock_type::now();
  bool ok = true;
  std::string detail;
  const std::vector<std::pair<const char*, DiscreteMeasure>> cases{
      {"dirac", DiscreteMeasure::dirac(1)}, {"two-point 0.5", DiscreteMeasure(1, {-0.5, 0.5}, {0.5, 0.5})}};
  for (const auto& [name, mu] : cases) {
    const auto fit = fit_potentials(mu, GaussianReference(1, 1.0), FitConfig{});
    ok = ok && fit.report.status == FitStatus::converged;
    const ThreeGaussianSampler sampler(mu, fit.potentials, 4096);
    const auto draws = sampler.batch(100000, 909);
    std::vector<double> ys, zs, ss, xs;
    for (const auto& d : draws) {
      ys.push_back(d.y);
      zs.push_back(d.z);
      ss.push_back(d.s);
      xs.push_back(d.x * d.s);
    }
    const double ky = ks_test_unsorted(ys).statistic, kz = ks_test_unsorted(zs).statistic,
                 ks = ks_test_unsorted(ss).statistic;
    ok = ok && ky <= 0.01 && kz <= 0.01 && ks <= 0.01;
    double second = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) second += mu.weight(i) * mu.atom(i)[0] * mu.atom(i)[0];
    const auto exs = mean_estimate(xs);
    const bool cov_ok = std::abs(exs.mean - second) <= 4.0 * exs.std_error + 1e-15;
    ok = ok && cov_ok;
    double worst_z = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
      std::vector<double> si;
      for (const auto& d : draws)
        if (d.label == i) si.push_back(d.s);
      const auto e = mean_estimate(si);
      const double z = std::abs(e.mean - mu.atom(i)[0]) / e.std_error;
      worst_z = std::max(worst_z, z);
      ok = ok && z <= 4.0;
    }
    detail += std::string(name) + fmt(": KS y %.4f z %.4f s %.4f", ky, kz, ks) +
              fmt(", E[xs] %.4f vs %.4f", exs.mean, second) + fmt(", label |z| max %.2f; ", worst_z);
  }
  const double secs = std::chrono::duration<double>(clock_type::now() - t0).count();
  ok = ok && secs <= 600.0;
  report(9, ok, detail, t0);
}

void criterion10() {
  using namespace cxbridge::combin;
  const auto t0 = clock_type::now();
  std::mt19937_64 gen(1010);
  bool ok = true;

  // mu_p(H_I) by enumeration against p^|I|
  double worst_mu = 0.0;
  for (unsigned n = 1; n <= 20; ++n) {
    const Mask i = std::uniform_int_distribution<Mask>(0, full_mask(n))(gen);
    const double p = std::uniform_real_distribution<double>(0.05, 0.95)(gen);
    const double enumerated = mu_p(n, [i](Mask j) { return (i & j) == i; }, p);
    const double err = std::abs(enumerated - std::pow(p, popcount(i)));
    worst_mu = std::max(worst_mu, err / n);
    ok = ok && err <= 1e-15 * n;
  }

  // blocked_qfold against q-tuple enumeration
  int dp_agree = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const unsigned n = 1 + gen() % 8, q = 1 + gen() % 3;
    std::vector<Mask> members(1 + gen() % 8);
    for (auto& m : members) m = std::uniform_int_distribution<Mask>(0, full_mask(n))(gen);
    const SubsetFamily a(n, members);
    std::vector<char> coverable(std::size_t{1} << n, 0);
    std::vector<std::size_t> idx(q, 0);
    const auto& mem = a.members();
    while (true) {
      Mask u = 0;
      for (auto k : idx) u |= mem[k];
      for (Mask x = 0; x < coverable.size(); ++x)
        if ((x & ~u) == 0) coverable[x] = 1;
      std::size_t pos = 0;
      while (pos < q && ++idx[pos] == mem.size()) idx[pos++] = 0;
      if (pos == q) break;
    }
    std::vector<Mask> expect;
    for (Mask x = 0; x < coverable.size(); ++x)
      if (!coverable[x]) expect.push_back(x);
    dp_agree += blocked_qfold(a, q).members() == expect ? 1 : 0;
  }
  ok = ok && dp_agree == 100;

  // certificates
  int found = 0, verified = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const unsigned n = 4 + gen() % 12;
    std::vector<Mask> gens(1 + gen() % 5);
    for (auto& m : gens) m = std::uniform_int_distribution<Mask>(1, full_mask(n))(gen);
    const auto s = SubsetFamily::where(n, [&](Mask j) {
      return std::any_of(gens.begin(), gens.end(), [j](Mask i) { return (i & j) == i; });
    });
    const double p = std::uniform_real_distribution<double>(0.1, 0.7)(gen);
    if (const auto cert = psmall_search(s, p)) {
      ++found;
      // independent check
      bool good = true;
      double w = 0.0;
      for (Mask i : cert->cover) w += std::pow(p, popcount(i));
      for (Mask x : s.members())
        good = good && std::any_of(cert->cover.begin(), cert->cover.end(), [x](Mask i) { return (i & x) == i; });
      good = good && w <= 0.5 + 1e-15;
      verified += good ? 1 : 0;
    }
  }
  ok = ok && found == verified;

  // antitonicity
  int antitone = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const unsigned n = 3 + gen() % 8, q = 1 + gen() % 3;
    std::vector<Mask> small(1 + gen() % 6);
    for (auto& m : small) m = std::uniform_int_distribution<Mask>(0, full_mask(n))(gen);
    std::vector<Mask> big = small;
    for (int k = 0; k < 1 + int(gen() % 6); ++k) big.push_back(std::uniform_int_distribution<Mask>(0, full_mask(n))(gen));
    const SubsetFamily a(n, small), b(n, big);
    antitone += blocked_qfold(b, q).subset_of(blocked_qfold(a, q)) ? 1 : 0;
  }
  ok = ok && antitone == 100;

  report(10, ok,
         fmt("mu_p max error/N %.1e; DP vs tuples %g/100; ", worst_mu, dp_agree) +
             fmt("certificates verified %g/%g; antitone %g/100", verified, found, antitone),
         t0);
}

}  // namespace

int main() {
  const std::vector<std::function<void()>> criteria{criterion1, criterion2, criterion3, criterion4, criterion5,
                                                    criterion6, criterion7, criterion8, criterion9, criterion10};
  for (const auto& c : criteria) c();
  std::printf("%d of %zu criteria failed\n", failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
