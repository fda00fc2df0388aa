#include "cxbridge/simplex.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace cxbridge::lp {

namespace {
constexpr double kReducedCostTol = 1e-12;
constexpr double kPivotTol = 1e-10;
constexpr std::size_t kRefactorEvery = 64;
constexpr std::size_t kBlandAfter = 40;  // consecutive degenerate pivots
}  // namespace

PhaseOneSimplex::PhaseOneSimplex(std::vector<double> rhs)
    : sign_(rhs.size()), rhs_(static_cast<Eigen::Index>(rhs.size())) {
  const auto r = static_cast<Eigen::Index>(rhs.size());
  for (Eigen::Index i = 0; i < r; ++i) {
    sign_[static_cast<std::size_t>(i)] = rhs[static_cast<std::size_t>(i)] < 0.0 ? -1.0 : 1.0;
    rhs_[i] = std::abs(rhs[static_cast<std::size_t>(i)]);
  }
  basis_.resize(rhs.size());
  artificial_pos_.resize(rhs.size());
  for (std::size_t i = 0; i < rhs.size(); ++i) {
    basis_[i] = -1 - static_cast<long>(i);
    artificial_pos_[i] = static_cast<long>(i);
  }
  binv_ = Eigen::MatrixXd::Identity(r, r);
  xb_ = rhs_;
}

std::size_t PhaseOneSimplex::add_column(std::span<const double> column) {
  if (column.size() != rows()) throw std::invalid_argument("column length does not match rows");
  Eigen::VectorXd c(static_cast<Eigen::Index>(rows()));
  for (std::size_t i = 0; i < rows(); ++i) c[static_cast<Eigen::Index>(i)] = sign_[i] * column[i];
  cols_.push_back(std::move(c));
  structural_pos_.push_back(-1);
  return cols_.size() - 1;
}

Eigen::VectorXd PhaseOneSimplex::flipped_duals() const {
  Eigen::VectorXd cb = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(rows()));
  for (std::size_t i = 0; i < rows(); ++i)
    if (basis_[i] < 0) cb[static_cast<Eigen::Index>(i)] = 1.0;
  return binv_.transpose() * cb;
}

std::vector<double> PhaseOneSimplex::duals() const {
  const Eigen::VectorXd y = flipped_duals();
  std::vector<double> out(rows());
  for (std::size_t i = 0; i < rows(); ++i) out[i] = sign_[i] * y[static_cast<Eigen::Index>(i)];
  return out;
}

double PhaseOneSimplex::reduced_cost(std::span<const double> column) const {
  const auto y = duals();
  double s = 0.0;
  for (std::size_t i = 0; i < rows(); ++i) s += y[i] * column[i];
  return -s;
}

double PhaseOneSimplex::infeasibility() const {
  double s = 0.0;
  for (std::size_t i = 0; i < rows(); ++i)
    if (basis_[i] < 0) s += xb_[static_cast<Eigen::Index>(i)];
  return s;
}

std::vector<double> PhaseOneSimplex::solution() const {
  std::vector<double> x(cols_.size(), 0.0);
  for (std::size_t i = 0; i < rows(); ++i)
    if (basis_[i] >= 0) x[static_cast<std::size_t>(basis_[i])] = std::max(0.0, xb_[static_cast<Eigen::Index>(i)]);
  return x;
}

void PhaseOneSimplex::refactor() {
  const auto r = static_cast<Eigen::Index>(rows());
  Eigen::MatrixXd b(r, r);
  for (Eigen::Index i = 0; i < r; ++i) {
    const long j = basis_[static_cast<std::size_t>(i)];
    if (j >= 0)
      b.col(i) = cols_[static_cast<std::size_t>(j)];
    else
      b.col(i) = Eigen::VectorXd::Unit(r, -1 - j);
  }
  binv_ = b.partialPivLu().inverse();
  xb_ = binv_ * rhs_;
  for (Eigen::Index i = 0; i < r; ++i)
    if (xb_[i] < 0.0 && xb_[i] > -1e-11) xb_[i] = 0.0;
  since_refactor_ = 0;
}

PhaseOneSimplex::Outcome PhaseOneSimplex::optimize(std::size_t max_pivots) {
  const auto r = static_cast<Eigen::Index>(rows());
  std::size_t degenerate = 0;
  std::size_t done = 0;
  while (true) {
    const Eigen::VectorXd y = flipped_duals();
    const bool bland = degenerate >= kBlandAfter;

    // Entering candidate: structural columns first, then artificials.
    long enter = std::numeric_limits<long>::min();
    double best = -kReducedCostTol;
    for (std::size_t j = 0; j < cols_.size(); ++j) {
      if (structural_pos_[j] >= 0) continue;
      const double d = -y.dot(cols_[j]);
      if (d < best) {
        best = d;
        enter = static_cast<long>(j);
        if (bland) break;
      }
    }
    if (enter == std::numeric_limits<long>::min() || !bland) {
      for (std::size_t i = 0; i < rows(); ++i) {
        if (artificial_pos_[i] >= 0) continue;
        const double d = 1.0 - y[static_cast<Eigen::Index>(i)];
        if (d < best) {
          best = d;
          enter = -1 - static_cast<long>(i);
          if (bland) break;
        }
      }
    }
    if (enter == std::numeric_limits<long>::min()) return Outcome::optimal;
    if (done >= max_pivots) return Outcome::pivot_limit;

    const Eigen::VectorXd a =
        enter >= 0 ? cols_[static_cast<std::size_t>(enter)] : Eigen::VectorXd::Unit(r, -1 - enter);
    const Eigen::VectorXd u = binv_ * a;

    Eigen::Index leave = -1;
    double theta = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < r; ++i) {
      if (u[i] <= kPivotTol) continue;
      const double ratio = std::max(0.0, xb_[i]) / u[i];
      const bool tie = leave >= 0 && std::abs(ratio - theta) <= 1e-15 * std::max(1.0, theta);
      if (ratio < theta && !tie) {
        theta = ratio;
        leave = i;
      } else if (tie) {
        // prefer evicting artificials, then the lowest variable label
        const long cur = basis_[static_cast<std::size_t>(leave)];
        const long cand = basis_[static_cast<std::size_t>(i)];
        const bool cand_art = cand < 0, cur_art = cur < 0;
        if ((cand_art && !cur_art) || (cand_art == cur_art && cand < cur)) leave = i;
      }
    }
    if (leave < 0) throw std::runtime_error("phase-one simplex: unbounded ray (numerical breakdown)");

    degenerate = theta <= 1e-14 ? degenerate + 1 : 0;

    // pivot
    xb_ -= theta * u;
    xb_[leave] = theta;
    const double piv = u[leave];
    binv_.row(leave) /= piv;
    for (Eigen::Index i = 0; i < r; ++i)
      if (i != leave && u[i] != 0.0) binv_.row(i) -= u[i] * binv_.row(leave);
    for (Eigen::Index i = 0; i < r; ++i)
      if (xb_[i] < 0.0) xb_[i] = 0.0;

    const long out = basis_[static_cast<std::size_t>(leave)];
    if (out >= 0)
      structural_pos_[static_cast<std::size_t>(out)] = -1;
    else
      artificial_pos_[static_cast<std::size_t>(-1 - out)] = -1;
    basis_[static_cast<std::size_t>(leave)] = enter;
    if (enter >= 0)
      structural_pos_[static_cast<std::size_t>(enter)] = leave;
    else
      artificial_pos_[static_cast<std::size_t>(-1 - enter)] = leave;

    ++pivots_;
    ++done;
    if (++since_refactor_ >= kRefactorEvery) refactor();
  }
}

std::vector<std::size_t> PhaseOneSimplex::compact(const std::function<bool(std::size_t)>& keep) {
  std::vector<std::size_t> remap(cols_.size(), std::numeric_limits<std::size_t>::max());
  std::vector<Eigen::VectorXd> kept;
  std::vector<long> pos;
  for (std::size_t j = 0; j < cols_.size(); ++j) {
    if (structural_pos_[j] >= 0 || keep(j)) {
      remap[j] = kept.size();
      kept.push_back(std::move(cols_[j]));
      pos.push_back(structural_pos_[j]);
    }
  }
  cols_ = std::move(kept);
  structural_pos_ = std::move(pos);
  for (auto& b : basis_)
    if (b >= 0) b = static_cast<long>(remap[static_cast<std::size_t>(b)]);
  return remap;
}

}  // namespace cxbridge::lp
