#include "cxbridge/quadrature.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

#include "cxbridge/errors.hpp"
#include "cxbridge/numeric.hpp"
#include "cxbridge/rng.hpp"

namespace cxbridge {

Accuracy parse_accuracy(const std::string& name) {
  if (name == "fast") return Accuracy::fast;
  if (name == "standard") return Accuracy::standard;
  if (name == "high") return Accuracy::high;
  throw InputError("unknown accuracy tier '" + name + "'");
}

std::string to_string(Accuracy a) {
  switch (a) {
    case Accuracy::fast: return "fast";
    case Accuracy::standard: return "standard";
    case Accuracy::high: return "high";
  }
  return "?";
}

namespace gauss {

namespace {

// Golub-Welsch: nodes are eigenvalues of the Jacobi matrix, weights are
// mu0 times the squared first eigenvector components.
Rule1D golub_welsch(const std::vector<double>& diag, const std::vector<double>& offdiag,
                    double mu0) {
  const auto n = static_cast<Eigen::Index>(diag.size());
  Eigen::VectorXd d = Eigen::Map<const Eigen::VectorXd>(diag.data(), n);
  Eigen::VectorXd e(std::max<Eigen::Index>(n - 1, 0));
  for (Eigen::Index i = 0; i + 1 < n; ++i) e[i] = offdiag[static_cast<std::size_t>(i)];
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(d, e, Eigen::ComputeEigenvectors);
  Rule1D rule;
  rule.nodes.resize(static_cast<std::size_t>(n));
  rule.weights.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    rule.nodes[static_cast<std::size_t>(i)] = solver.eigenvalues()[i];
    const double v0 = solver.eigenvectors()(0, i);
    rule.weights[static_cast<std::size_t>(i)] = mu0 * v0 * v0;
  }
  return rule;
}

}  // namespace

Rule1D hermite(std::size_t n) {
  std::vector<double> diag(n, 0.0), off(n > 0 ? n - 1 : 0);
  for (std::size_t j = 1; j < n; ++j) off[j - 1] = std::sqrt(static_cast<double>(j));
  auto rule = golub_welsch(diag, off, 1.0);
  // exact antisymmetry of the node set
  for (std::size_t i = 0; i < n / 2; ++i) {
    const double t = 0.5 * (rule.nodes[n - 1 - i] - rule.nodes[i]);
    const double w = 0.5 * (rule.weights[n - 1 - i] + rule.weights[i]);
    rule.nodes[i] = -t;
    rule.nodes[n - 1 - i] = t;
    rule.weights[i] = rule.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  return rule;
}

Rule1D legendre(std::size_t n) {
  std::vector<double> diag(n, 0.0), off(n > 0 ? n - 1 : 0);
  for (std::size_t j = 1; j < n; ++j) {
    const double jj = static_cast<double>(j);
    off[j - 1] = jj / std::sqrt(4.0 * jj * jj - 1.0);
  }
  return golub_welsch(diag, off, 2.0);
}

Rule1D half_gaussian(std::size_t n) {
  // Discretize the weight on [0, 40] with composite 16-point Gauss-Legendre
  // panels of width 0.05; beyond 40 the weight is below e^-800.
  const auto gl = legendre(16);
  constexpr double kLength = 40.0;
  constexpr std::size_t kPanels = 800;
  const double width = kLength / kPanels;
  std::vector<double> t, u;
  t.reserve(kPanels * gl.nodes.size());
  u.reserve(kPanels * gl.nodes.size());
  for (std::size_t p = 0; p < kPanels; ++p) {
    const double a = p * width;
    for (std::size_t j = 0; j < gl.nodes.size(); ++j) {
      const double x = a + 0.5 * width * (gl.nodes[j] + 1.0);
      t.push_back(x);
      u.push_back(0.5 * width * gl.weights[j] * std::exp(-0.5 * x * x));
    }
  }
  double mu0 = 0.0;
  for (double w : u) mu0 += w;

  // Stieltjes procedure on orthonormal polynomial values.
  const std::size_t big = t.size();
  std::vector<double> q_prev(big, 0.0), q(big, 1.0 / std::sqrt(mu0)), q_next(big);
  std::vector<double> diag(n), off(n > 0 ? n - 1 : 0);
  double b_prev = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double a = 0.0;
    for (std::size_t l = 0; l < big; ++l) a += u[l] * t[l] * q[l] * q[l];
    diag[j] = a;
    if (j + 1 == n) break;
    double norm2 = 0.0;
    for (std::size_t l = 0; l < big; ++l) {
      q_next[l] = (t[l] - a) * q[l] - b_prev * q_prev[l];
      norm2 += u[l] * q_next[l] * q_next[l];
    }
    const double b = std::sqrt(norm2);
    for (std::size_t l = 0; l < big; ++l) q_next[l] /= b;
    off[j] = b;
    b_prev = b;
    std::swap(q_prev, q);
    std::swap(q, q_next);
  }
  auto rule = golub_welsch(diag, off, std::sqrt(std::numbers::pi / 2.0));
  return rule;
}

Rule1D symmetric_normal(std::size_t half) {
  static std::mutex mutex;
  static std::map<std::size_t, Rule1D> cache;
  {
    std::lock_guard lock(mutex);
    if (auto it = cache.find(half); it != cache.end()) return it->second;
  }
  const auto h = half_gaussian(half);
  double total = 0.0;
  for (double w : h.weights) total += w;
  Rule1D rule;
  rule.nodes.resize(2 * half);
  rule.weights.resize(2 * half);
  // h.nodes ascending; mirror so the full rule is ascending.
  for (std::size_t j = 0; j < half; ++j) {
    const double w = 0.5 * h.weights[j] / total;
    rule.nodes[half - 1 - j] = -h.nodes[j];
    rule.nodes[half + j] = h.nodes[j];
    rule.weights[half - 1 - j] = w;
    rule.weights[half + j] = w;
  }
  std::lock_guard lock(mutex);
  cache.emplace(half, rule);
  return rule;
}

}  // namespace gauss

QuadratureRule QuadratureRule::rescaled(double new_scale) const {
  if (!(new_scale > 0.0)) throw InputError("quadrature scale must be positive");
  QuadratureRule out = *this;
  const double f = new_scale / scale;
  for (double& y : out.nodes) y *= f;
  out.scale = new_scale;
  return out;
}

MomentResiduals moment_residuals(const QuadratureRule& rule) {
  const std::size_t n = rule.dim;
  CompensatedSum mass;
  std::vector<double> mean(n, 0.0), second(n * n, 0.0);
  for (std::size_t k = 0; k < rule.size(); ++k) {
    const double w = rule.weights[k];
    const auto y = rule.node(k);
    mass.add(w);
    for (std::size_t a = 0; a < n; ++a) {
      mean[a] += w * y[a];
      for (std::size_t b = 0; b < n; ++b) second[a * n + b] += w * y[a] * y[b];
    }
  }
  MomentResiduals r{std::abs(mass.value() - 1.0), 0.0, 0.0};
  for (double m : mean) r.mean += m * m;
  r.mean = std::sqrt(r.mean);
  const double s2 = rule.scale * rule.scale;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b)
      r.second = std::max(r.second, std::abs(second[a * n + b] - (a == b ? s2 : 0.0)));
  return r;
}

QuadratureRule build_tensor_rule(std::size_t dim, double scale, std::size_t per_axis,
                                 double moment_tol) {
  if (dim == 0) throw InputError("quadrature dimension must be positive");
  if (per_axis < 2 || per_axis % 2 != 0) throw InputError("per-axis node count must be even");
  if (!(scale > 0.0)) throw InputError("quadrature scale must be positive");
  std::size_t total = 1;
  for (std::size_t d = 0; d < dim; ++d) {
    if (total > (std::size_t{1} << 24) / per_axis)
      throw ResourceError("tensor rule exceeds 2^24 nodes");
    total *= per_axis;
  }
  const auto axis = gauss::symmetric_normal(per_axis / 2);
  QuadratureRule rule;
  rule.dim = dim;
  rule.scale = scale;
  rule.kind = QuadratureKind::tensor_gauss;
  rule.per_axis = per_axis;
  rule.moment_tol = moment_tol;
  rule.nodes.resize(total * dim);
  rule.weights.resize(total);
  std::vector<std::size_t> idx(dim, 0);
  for (std::size_t k = 0; k < total; ++k) {
    double w = 1.0;
    for (std::size_t d = 0; d < dim; ++d) {
      rule.nodes[k * dim + d] = scale * axis.nodes[idx[d]];
      w *= axis.weights[idx[d]];
    }
    rule.weights[k] = w;
    for (std::size_t d = dim; d-- > 0;) {
      if (++idx[d] < per_axis) break;
      idx[d] = 0;
    }
  }
  return rule;
}

QuadratureRule build_monte_carlo_rule(std::size_t dim, double scale, std::size_t count,
                                      std::uint64_t seed) {
  if (count < 2 || count % 2 != 0) throw InputError("Monte-Carlo node count must be even");
  const std::size_t half = count / 2;
  Eigen::MatrixXd z(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(half));
  StreamRng rng(seed, 0);
  for (Eigen::Index j = 0; j < z.cols(); ++j)
    for (Eigen::Index a = 0; a < z.rows(); ++a) z(a, j) = rng.normal();
  // Antithetic pairs make the mean vanish; whitening fixes the covariance.
  const Eigen::MatrixXd cov = (z * z.transpose()) / static_cast<double>(half);
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw std::runtime_error("degenerate Monte-Carlo sample");
  const Eigen::MatrixXd white = llt.matrixL().solve(z) * scale;
  QuadratureRule rule;
  rule.dim = dim;
  rule.scale = scale;
  rule.kind = QuadratureKind::monte_carlo;
  rule.seed = seed;
  rule.moment_tol = 1e-3;
  rule.nodes.resize(count * dim);
  rule.weights.assign(count, 1.0 / static_cast<double>(count));
  for (std::size_t j = 0; j < half; ++j)
    for (std::size_t a = 0; a < dim; ++a) {
      const double v = white(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(j));
      rule.nodes[(2 * j) * dim + a] = v;
      rule.nodes[(2 * j + 1) * dim + a] = -v;
    }
  return rule;
}

QuadratureRule build_quadrature(std::size_t dim, double scale, Accuracy accuracy,
                                std::uint64_t seed) {
  if (dim == 0) throw InputError("quadrature dimension must be positive");
  if (!(scale > 0.0)) throw InputError("quadrature scale must be positive");
  if (dim > 3) return build_monte_carlo_rule(dim, scale, 100000, seed);
  if (dim == 3 && accuracy == Accuracy::high)
    throw InputError("tensor rule with 256^3 nodes is not supported; use fast or standard");
  switch (accuracy) {
    case Accuracy::fast: return build_tensor_rule(dim, scale, 64, 1e-6);
    case Accuracy::standard: return build_tensor_rule(dim, scale, 128, 1e-9);
    case Accuracy::high: return build_tensor_rule(dim, scale, 256, 1e-12);
  }
  throw InputError("unknown accuracy tier");
}

}  // namespace cxbridge
