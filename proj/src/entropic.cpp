#include "cxbridge/entropic.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numbers>

#include "cxbridge/errors.hpp"
#include "cxbridge/numeric.hpp"
#include "cxbridge/parallel.hpp"
#include "cxbridge/rng.hpp"

namespace cxbridge {

namespace {

void require_shape(const DualPotentials& pot, const DiscreteMeasure& measure) {
  if (pot.atoms != measure.size() || pot.dim != measure.dim() || pot.U.size() != pot.atoms ||
      pot.V.size() != pot.atoms * pot.dim)
    throw InputError("potentials shape does not match the measure");
}

void require_rule(const DiscreteMeasure& measure, const QuadratureRule& quad) {
  if (quad.dim != measure.dim()) throw InputError("quadrature dimension does not match the measure");
}

double log_sum_exp(std::span<const double> s) {
  const double mx = *std::max_element(s.begin(), s.end());
  double acc = 0.0;
  for (double v : s) acc += std::exp(v - mx);
  return mx + std::log(acc);
}

// One pass over the rule: value, gradient and (optionally) Hessian of g.
struct Accumulated {
  double value = 0.0;
  DualPotentials grad;
  Eigen::MatrixXd hess;
};

Accumulated accumulate(const DualPotentials& pot, const DiscreteMeasure& measure, const QuadratureRule& quad,
                       bool want_grad, bool want_hess) {
  require_shape(pot, measure);
  require_rule(measure, quad);
  const std::size_t m = measure.size(), n = measure.dim(), w1 = n + 1;
  const PosteriorWeights post(measure, pot);
  Accumulated acc;
  CompensatedSum value;
  for (std::size_t i = 0; i < m; ++i) value.add(measure.weight(i) * pot.score(i, measure.atom(i)));
  if (want_grad) {
    acc.grad = DualPotentials::zeros(m, n);
    for (std::size_t i = 0; i < m; ++i) {
      acc.grad.U[i] = measure.weight(i);
      for (std::size_t d = 0; d < n; ++d) acc.grad.V[i * n + d] = measure.weight(i) * measure.atom(i)[d];
    }
  }
  if (want_hess) acc.hess = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m * w1), static_cast<Eigen::Index>(m * w1));

  std::vector<double> pi(m), phi(w1);
  for (std::size_t k = 0; k < quad.size(); ++k) {
    const auto y = quad.node(k);
    const double w = quad.weights[k];
    value.add(-w * post.log_partition(y));
    if (!want_grad) continue;
    post.probabilities(y, pi);
    for (std::size_t i = 0; i < m; ++i) {
      const double wp = w * pi[i];
      acc.grad.U[i] -= wp;
      for (std::size_t d = 0; d < n; ++d) acc.grad.V[i * n + d] -= wp * y[d];
    }
    if (!want_hess) continue;
    phi[0] = 1.0;
    for (std::size_t d = 0; d < n; ++d) phi[d + 1] = y[d];
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        const double c = w * ((i == j ? pi[i] : 0.0) - pi[i] * pi[j]);
        if (c == 0.0) continue;
        for (std::size_t a = 0; a < w1; ++a)
          for (std::size_t b = 0; b < w1; ++b)
            acc.hess(static_cast<Eigen::Index>(i * w1 + a), static_cast<Eigen::Index>(j * w1 + b)) -= c * phi[a] * phi[b];
      }
  }
  acc.value = value.value();
  return acc;
}

}  // namespace

// ---------------------------------------------------------------------------

PosteriorWeights::PosteriorWeights(const DiscreteMeasure& measure, const DualPotentials& potentials)
    : measure_(measure), potentials_(potentials), log_p_(measure.size()) {
  require_shape(potentials, measure);
  for (std::size_t i = 0; i < measure.size(); ++i) log_p_[i] = std::log(measure.weight(i));
}

void PosteriorWeights::scores(std::span<const double> y, std::span<double> out) const {
  for (std::size_t i = 0; i < log_p_.size(); ++i) out[i] = log_p_[i] + potentials_.score(i, y);
}

double PosteriorWeights::log_partition(std::span<const double> y) const {
  double buf[64];
  std::vector<double> big;
  std::span<double> s;
  if (atoms() <= 64) {
    s = std::span<double>(buf, atoms());
  } else {
    big.resize(atoms());
    s = big;
  }
  scores(y, s);
  return log_sum_exp(s);
}

void PosteriorWeights::probabilities(std::span<const double> y, std::span<double> out) const {
  scores(y, out);
  const double lse = log_sum_exp(out);
  for (auto& v : out) v = std::exp(v - lse);
}

void PosteriorWeights::log_weights(std::span<const double> y, std::span<double> out) const {
  scores(y, out);
  const double lse = log_sum_exp(out);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] - log_p_[i] - lse;
}

double PosteriorWeights::log_weight(std::size_t i, std::span<const double> y) const {
  return potentials_.score(i, y) - log_partition(y);
}

// ---------------------------------------------------------------------------

double eval_g(const DualPotentials& potentials, const DiscreteMeasure& measure, const QuadratureRule& quad) {
  return accumulate(potentials, measure, quad, false, false).value;
}

DualPotentials grad_g(const DualPotentials& potentials, const DiscreteMeasure& measure,
                      const QuadratureRule& quad) {
  return accumulate(potentials, measure, quad, true, false).grad;
}

Eigen::MatrixXd hessian_g(const DualPotentials& potentials, const DiscreteMeasure& measure,
                          const QuadratureRule& quad) {
  return accumulate(potentials, measure, quad, true, true).hess;
}

DualPotentials project_gauge(const DualPotentials& direction, std::span<const double> weights) {
  DualPotentials out = direction;
  double pp = 0.0;
  for (double p : weights) pp += p * p;
  double c = 0.0;
  std::vector<double> w(out.dim, 0.0);
  for (std::size_t i = 0; i < out.atoms; ++i) {
    c += weights[i] * out.U[i];
    for (std::size_t d = 0; d < out.dim; ++d) w[d] += weights[i] * out.V[i * out.dim + d];
  }
  for (std::size_t i = 0; i < out.atoms; ++i) {
    out.U[i] -= weights[i] * c / pp;
    for (std::size_t d = 0; d < out.dim; ++d) out.V[i * out.dim + d] -= weights[i] * w[d] / pp;
  }
  return out;
}

ConstraintResiduals verify_constraints(const DualPotentials& potentials, const DiscreteMeasure& measure,
                                       const QuadratureRule& quad, std::uint64_t seed) {
  require_shape(potentials, measure);
  require_rule(measure, quad);
  const std::size_t m = measure.size(), n = measure.dim();
  const PosteriorWeights post(measure, potentials);
  std::vector<CompensatedSum> mass(m), mean(m * n);
  std::vector<double> lw(m);
  for (std::size_t k = 0; k < quad.size(); ++k) {
    const auto y = quad.node(k);
    post.log_weights(y, lw);
    for (std::size_t i = 0; i < m; ++i) {
      const double f = quad.weights[k] * std::exp(lw[i]);
      mass[i].add(f);
      for (std::size_t d = 0; d < n; ++d) mean[i * n + d].add(f * y[d]);
    }
  }
  ConstraintResiduals r;
  r.mass.resize(m);
  r.mean.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    r.mass[i] = std::abs(mass[i].value() - 1.0);
    double sq = 0.0;
    for (std::size_t d = 0; d < n; ++d) {
      const double e = mean[i * n + d].value() - measure.atom(i)[d];
      sq += e * e;
    }
    r.mean[i] = std::sqrt(sq);
    r.max_mass = std::max(r.max_mass, r.mass[i]);
    r.max_mean = std::max(r.max_mean, r.mean[i]);
  }
  std::vector<double> y(n);
  for (std::uint64_t j = 0; j < 100; ++j) {
    StreamRng rng(seed, j);
    for (auto& v : y) v = quad.scale * rng.normal();
    post.log_weights(y, lw);
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += measure.weight(i) * std::exp(lw[i]);
    r.identity = std::max(r.identity, std::abs(s - 1.0));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Fitting

std::string to_string(FitStatus s) {
  switch (s) {
    case FitStatus::converged: return "converged";
    case FitStatus::not_dominated_suspected: return "not_dominated_suspected";
    case FitStatus::non_converged: return "non_converged";
  }
  return "non_converged";
}

void FitConfig::validate() const {
  if (!(slack > 0.0 && slack < 1.0)) throw InputError("fit slack must lie in (0, 1)");
  if (!(grad_tol > 0.0)) throw InputError("grad_tol must be positive");
  if (!(norm_cap > 0.0)) throw InputError("norm_cap must be positive");
  if (max_iters == 0) throw InputError("max_iters must be positive");
}

namespace {

// Potentials as an m x (n+1) matrix with rows (U_i, V_i).
Eigen::MatrixXd to_matrix(const DualPotentials& p) {
  Eigen::MatrixXd t(static_cast<Eigen::Index>(p.atoms), static_cast<Eigen::Index>(p.dim + 1));
  for (std::size_t i = 0; i < p.atoms; ++i) {
    t(static_cast<Eigen::Index>(i), 0) = p.U[i];
    for (std::size_t d = 0; d < p.dim; ++d)
      t(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d + 1)) = p.V[i * p.dim + d];
  }
  return t;
}

DualPotentials from_matrix(const Eigen::MatrixXd& t) {
  const auto m = static_cast<std::size_t>(t.rows()), n = static_cast<std::size_t>(t.cols() - 1);
  DualPotentials p = DualPotentials::zeros(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    p.U[i] = t(static_cast<Eigen::Index>(i), 0);
    for (std::size_t d = 0; d < n; ++d) p.V[i * n + d] = t(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d + 1));
  }
  return p;
}

}  // namespace

FitResult fit_potentials(const DiscreteMeasure& measure, const QuadratureRule& quad, const FitConfig& config) {
  config.validate();
  require_rule(measure, quad);
  const std::size_t m = measure.size(), n = measure.dim();
  const auto M = static_cast<Eigen::Index>(m), W = static_cast<Eigen::Index>(n + 1);
  FitResult res{DualPotentials::zeros(m, n), {}};
  if (m == 1) {
    res.report.status = FitStatus::converged;
    res.report.g = eval_g(res.potentials, measure, quad);
    res.report.residuals = verify_constraints(res.potentials, measure, quad);
    return res;
  }

  // Orthonormal basis of the complement of p; S = {Q Phi}.
  Eigen::VectorXd p(M);
  for (std::size_t i = 0; i < m; ++i) p[static_cast<Eigen::Index>(i)] = measure.weight(i);
  const Eigen::MatrixXd full_q = Eigen::HouseholderQR<Eigen::MatrixXd>(p).householderQ() * Eigen::MatrixXd::Identity(M, M);
  const Eigen::MatrixXd Q = full_q.rightCols(M - 1);
  const Eigen::Index R = (M - 1) * W;

  auto vec = [&](const Eigen::MatrixXd& a) {  // (m-1) x (n+1) -> row-major vector
    Eigen::VectorXd v(R);
    for (Eigen::Index r = 0; r < M - 1; ++r)
      for (Eigen::Index a2 = 0; a2 < W; ++a2) v[r * W + a2] = a(r, a2);
    return v;
  };
  auto unvec = [&](const Eigen::VectorXd& v) {
    Eigen::MatrixXd a(M - 1, W);
    for (Eigen::Index r = 0; r < M - 1; ++r)
      for (Eigen::Index a2 = 0; a2 < W; ++a2) a(r, a2) = v[r * W + a2];
    return a;
  };
  Eigen::MatrixXd kron = Eigen::MatrixXd::Zero(M * W, R);  // Q kron I
  for (Eigen::Index i = 0; i < M; ++i)
    for (Eigen::Index r = 0; r < M - 1; ++r)
      for (Eigen::Index a2 = 0; a2 < W; ++a2) kron(i * W + a2, r * W + a2) = Q(i, r);

  Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(M, W);
  std::deque<std::pair<double, double>> history;  // (g, norm)
  auto& rep = res.report;
  double best_g = -std::numeric_limits<double>::infinity(), best_grad = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd best_theta = theta;

  for (std::size_t it = 0;; ++it) {
    const DualPotentials cur = from_matrix(theta);
    const Accumulated acc = accumulate(cur, measure, quad, true, true);
    const Eigen::MatrixXd G = Q.transpose() * to_matrix(acc.grad);
    const double gnorm = G.norm();
    if (acc.value > best_g || (acc.value == best_g && gnorm < best_grad)) {
      best_g = acc.value;
      best_grad = gnorm;
      best_theta = theta;
    }
    history.emplace_back(acc.value, theta.norm());
    if (history.size() > 10) history.pop_front();
    rep.iterations = it;
    rep.g = acc.value;
    rep.grad_norm = gnorm;
    if (gnorm <= config.grad_tol) {
      rep.status = FitStatus::converged;
      best_theta = theta;
      break;
    }
    if (theta.norm() > config.norm_cap && history.size() == 10) {
      bool increasing = true;
      for (std::size_t j = 1; j < history.size(); ++j) increasing = increasing && history[j].first > history[j - 1].first;
      if (increasing) {
        rep.status = FitStatus::not_dominated_suspected;
        break;
      }
    }
    if (it >= config.max_iters) {
      rep.status = FitStatus::non_converged;
      break;
    }

    const Eigen::VectorXd gr = vec(G);
    const Eigen::MatrixXd neg_h = -(kron.transpose() * acc.hess * kron);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(neg_h);
    Eigen::VectorXd step;
    bool newton = ldlt.info() == Eigen::Success && ldlt.isPositive() &&
                  ldlt.vectorD().minCoeff() > 1e-14 * std::max(1.0, ldlt.vectorD().maxCoeff());
    if (newton) {
      step = ldlt.solve(gr);
      newton = step.allFinite() && step.dot(gr) > 0.0;
    }
    if (!newton) {
      step = gr;
      ++rep.gradient_steps;
    }

    auto trial = [&](double t) { return Eigen::MatrixXd(theta + t * (Q * unvec(step))); };
    const double slope = step.dot(gr);
    double t = 1.0;
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt, t *= 0.5) {
      const Eigen::MatrixXd cand = trial(t);
      const double gv = eval_g(from_matrix(cand), measure, quad);
      if (gv >= acc.value + 1e-4 * t * slope) {
        theta = cand;
        accepted = true;
        break;
      }
    }
    if (!accepted && newton) {
      // Objective differences are at rounding level; fall back to the
      // gradient norm as merit function for the full Newton step.
      const Eigen::MatrixXd cand = trial(1.0);
      const double gn = (Q.transpose() * to_matrix(grad_g(from_matrix(cand), measure, quad))).norm();
      if (gn < gnorm) {
        theta = cand;
        accepted = true;
      }
    }
    if (!accepted) {
      rep.status = FitStatus::non_converged;
      break;
    }
  }

  if (rep.status != FitStatus::converged) theta = best_theta;
  res.potentials = from_matrix(theta);
  res.potentials.gauge_fix(measure.weights());
  if (rep.status != FitStatus::converged) {
    rep.g = eval_g(res.potentials, measure, quad);
    rep.grad_norm = (Q.transpose() * to_matrix(grad_g(res.potentials, measure, quad))).norm();
  }
  rep.residuals = verify_constraints(res.potentials, measure, quad);
  return res;
}

FitResult fit_potentials(const DiscreteMeasure& measure, const GaussianReference& gref, const FitConfig& config) {
  if (gref.dim != measure.dim()) throw InputError("reference dimension does not match the measure");
  return fit_potentials(measure, build_quadrature(gref.dim, gref.scale, config.accuracy), config);
}

// ---------------------------------------------------------------------------
// Sampling

LabeledPoint posterior_draw(const PosteriorWeights& weights, double scale, std::uint64_t seed, std::uint64_t draw) {
  StreamRng rng(seed, draw);
  LabeledPoint out;
  out.y.resize(weights.dim());
  for (auto& v : out.y) v = scale * rng.normal();
  std::vector<double> pi(weights.atoms());
  weights.probabilities(out.y, pi);
  const double u = rng.uniform();
  double cum = 0.0;
  out.label = pi.size() - 1;
  for (std::size_t i = 0; i < pi.size(); ++i) {
    cum += pi[i];
    if (u < cum) {
      out.label = i;
      break;
    }
  }
  return out;
}

PosteriorSample sample_posterior(const DualPotentials& potentials, const DiscreteMeasure& measure,
                                 const GaussianReference& gref, std::size_t count, std::uint64_t seed,
                                 unsigned threads, std::uint64_t first) {
  if (gref.dim != measure.dim()) throw InputError("reference dimension does not match the measure");
  const PosteriorWeights weights(measure, potentials);
  const std::size_t n = measure.dim();
  PosteriorSample s;
  s.dim = n;
  s.labels.resize(count);
  s.points.resize(count * n);
  parallel_for(count, threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t d = b; d < e; ++d) {
      const auto lp = posterior_draw(weights, gref.scale, seed, first + d);
      s.labels[d] = lp.label;
      std::copy(lp.y.begin(), lp.y.end(), s.points.begin() + static_cast<long>(d * n));
    }
  });
  return s;
}

// ---------------------------------------------------------------------------
// Conditional laws

namespace {

// Composite 16-point Gauss-Legendre over [a, b] in `panels` pieces.
template <class F>
double integrate(F&& f, double a, double b, std::size_t panels) {
  static const gauss::Rule1D gl = gauss::legendre(16);
  const double h = (b - a) / static_cast<double>(panels);
  CompensatedSum s;
  for (std::size_t p = 0; p < panels; ++p) {
    const double lo = a + h * static_cast<double>(p), mid = lo + 0.5 * h;
    for (std::size_t j = 0; j < gl.nodes.size(); ++j) s.add(0.5 * h * gl.weights[j] * f(mid + 0.5 * h * gl.nodes[j]));
  }
  return s.value();
}

}  // namespace

ConditionalLaw::ConditionalLaw(std::function<double(double)> unnormalized, double scale)
    : unnormalized_(std::move(unnormalized)), scale_(scale) {
  if (!(scale > 0.0)) throw InputError("conditional law scale must be positive");
  // golden-section search for the mode of a concave log-density
  double a = -60.0, b = 60.0;
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - r * (b - a), d = a + r * (b - a);
  double fc = unnormalized_(c), fd = unnormalized_(d);
  while (b - a > 1e-10) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = unnormalized_(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = unnormalized_(d);
    }
  }
  mode_ = 0.5 * (a + b);
  radius_ = std::max(12.0, std::abs(mode_) + 12.0 * scale_);
  if (!std::isfinite(unnormalized_(mode_))) throw ResourceError("conditional density overflows");

  const double peak = unnormalized_(mode_);
  auto rel = [&](double y) { return std::exp(unnormalized_(y) - peak); };
  const std::size_t panels = 1024;
  const double mass = integrate(rel, -radius_, radius_, panels);
  log_norm_ = peak + std::log(mass);
  mean_ = integrate([&](double y) { return y * rel(y); }, -radius_, radius_, panels) / mass;
  variance_ = integrate([&](double y) { return (y - mean_) * (y - mean_) * rel(y); }, -radius_, radius_, panels) / mass;

  grid_.resize(kGridPoints);
  table_.resize(kGridPoints);
  for (std::size_t j = 0; j < kGridPoints; ++j) {
    grid_[j] = -radius_ + 2.0 * radius_ * static_cast<double>(j) / static_cast<double>(kGridPoints - 1);
    table_[j] = density(grid_[j]);
  }
}

ConditionalLaw ConditionalLaw::gaussian(double mean, double sd) {
  if (!(sd > 0.0)) throw InputError("standard deviation must be positive");
  return ConditionalLaw([mean, sd](double y) { return -0.5 * (y - mean) * (y - mean) / (sd * sd); }, sd);
}

double ConditionalLaw::density(double y) const { return std::exp(log_density(y)); }

double ConditionalLaw::raw_mass() const noexcept { return std::exp(log_norm_); }

double ConditionalLaw::grid_mass() const {
  CompensatedSum s;
  const double h = grid_[1] - grid_[0];
  for (std::size_t j = 0; j < table_.size(); ++j)
    s.add((j == 0 || j + 1 == table_.size() ? 0.5 : 1.0) * h * table_[j]);
  return s.value();
}

double ConditionalLaw::min_log_curvature() const {
  const double h = grid_[1] - grid_[0];
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t j = 1; j + 1 < grid_.size(); ++j) {
    const double c = -(log_density(grid_[j + 1]) - 2.0 * log_density(grid_[j]) + log_density(grid_[j - 1])) / (h * h);
    best = std::min(best, c);
  }
  return best;
}

ConditionalLaw conditional_density(const DualPotentials& potentials, const DiscreteMeasure& measure,
                                   const GaussianReference& gref, std::size_t i) {
  require_shape(potentials, measure);
  if (measure.dim() != 1 || gref.dim != 1) throw InputError("conditional densities are tabulated in dimension one only");
  if (i >= measure.size()) throw InputError("atom index out of range");
  const std::size_t m = measure.size();
  std::vector<double> a(m), b(m);
  for (std::size_t j = 0; j < m; ++j) {
    a[j] = std::log(measure.weight(j)) + potentials.U[j];
    b[j] = potentials.V[j];
  }
  const double rho = gref.scale;
  const double log_c = -std::log(rho * std::sqrt(2.0 * std::numbers::pi));
  const double log_pi = a[i] - potentials.U[i];
  // a[j] carries log p_j, so log f_i* = a[i] - log p_i + b[i] y - LSE
  auto logf = [a, b, i, rho, log_c, log_pi](double y) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < a.size(); ++j) mx = std::max(mx, a[j] + b[j] * y);
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) s += std::exp(a[j] + b[j] * y - mx);
    return a[i] - log_pi + b[i] * y - (mx + std::log(s)) + log_c - 0.5 * y * y / (rho * rho);
  };
  return ConditionalLaw(logf, rho);
}

}  // namespace cxbridge
