#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cxbridge/measures.hpp"
#include "cxbridge/potentials.hpp"
#include "cxbridge/quadrature.hpp"

namespace cxbridge {

enum class Verdict { dominated, not_dominated, inconclusive };

std::string to_string(Verdict v);

/// Coupling of the atoms (rows) with the quadrature nodes (columns).
struct MartingaleTransportPlan {
  std::size_t atoms = 0;
  std::size_t nodes = 0;
  std::vector<double> mass;  ///< atoms x nodes, row-major
  double slack_tol = 0.0;

  double operator()(std::size_t i, std::size_t k) const noexcept { return mass[i * nodes + k]; }
  double& operator()(std::size_t i, std::size_t k) noexcept { return mass[i * nodes + k]; }
};

struct PlanResiduals {
  double row = 0.0;         ///< max_i |sum_k pi_ik - p_i|
  double column = 0.0;      ///< max_k |sum_i pi_ik - w_k|
  double barycenter = 0.0;  ///< max_i ||sum_k pi_ik y_k - p_i x_i||
  double min_entry = 0.0;

  double worst() const noexcept;
};

/// Recomputes the three plan invariant families.
PlanResiduals verify_plan(const MartingaleTransportPlan& plan, const DiscreteMeasure& measure,
                          const QuadratureRule& quad);

/// Separating affine family and its dual gap
/// h(U, V) = E[max_i (U_i + <V_i, Y>)] - sum_i p_i (U_i + <V_i, x_i>)
/// evaluated at the unit-norm, gauge-fixed direction.
struct SeparatingDirection {
  DualPotentials direction;
  double gap = 0.0;
};

struct DominationVerdict {
  Verdict status = Verdict::inconclusive;
  std::optional<MartingaleTransportPlan> plan;
  std::optional<PlanResiduals> residuals;
  std::optional<SeparatingDirection> separator;
  double infeasibility = 0.0;  ///< LP route: phase-one optimum
  double min_gap = 0.0;        ///< dual route: minimized gap on the unit sphere of S
  std::size_t iterations = 0;
  std::string note;
};

/// Dual gap h(U, V) for the quadrature law.
double dual_gap(const DualPotentials& direction, const DiscreteMeasure& measure,
                const QuadratureRule& quad);

struct LpOptions {
  std::size_t max_rounds = 20000;  ///< column-generation rounds
  std::size_t max_pivots = 200000;
};

/// Strassen feasibility: is there pi >= 0 with marginals (p, w) and
/// sum_k pi_ik y_k = p_i x_i (each coordinate relaxed by slack_tol)?
///
/// Solved exactly by column generation: every column assigns each node to a
/// single atom, and pricing picks, node by node, the atom maximizing the
/// current affine multiplier. Returns `dominated` with a plan when the relaxed
/// program is feasible and the plan verifies within slack_tol,
/// `not_dominated` with the phase-one Farkas multipliers as separator when it
/// is infeasible and the normalized gap is below -10 * moment_tol, and
/// `inconclusive` otherwise (including when a cap is hit).
DominationVerdict lp_martingale_feasible(const DiscreteMeasure& measure, const QuadratureRule& quad,
                                         double slack_tol, const LpOptions& options = {});

/// Default relaxation: ten times the rule's moment tolerance.
double default_slack_tol(const QuadratureRule& quad);

struct DualCheckOptions {
  std::size_t restarts = 50;
  std::size_t sphere_iterations = 300;
  std::size_t ball_iterations = 1500;
  std::uint64_t seed = 1;
};

/// Minimizes h over the unit sphere of the gauge subspace by projected
/// subgradient steps with Polyak step sizes against an adaptive target level.
/// A convex pass over the unit ball finds negative values reliably; the
/// sphere restarts estimate the positive minimum. Measures whose barycenter
/// is not at the origin are reported not dominated outright.
DominationVerdict dual_domination_check(const DiscreteMeasure& measure, const QuadratureRule& quad,
                                        const DualCheckOptions& options = {});

struct ScaleProbe {
  double scale;
  Verdict status;
};

struct ScaleSearchResult {
  double scale = 1.0;      ///< smallest dominating scale found (bracket upper end)
  bool dominated = true;   ///< false when X is not dominated even at scale 1
  std::vector<ScaleProbe> trace;
};

struct ScaleSearchOptions {
  double tol = 1e-3;
  Accuracy accuracy = Accuracy::high;
};

/// Bisection on rho in (0, 1] for the threshold scale rho* such that
/// X <=cx rho G exactly when rho >= rho*. Inconclusive probes count as not
/// dominated, so the returned scale errs high. A Dirac mass at the origin
/// returns 0.
ScaleSearchResult max_dominated_scale(const DiscreteMeasure& measure,
                                      const ScaleSearchOptions& options = {});

}  // namespace cxbridge
