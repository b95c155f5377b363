#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hopcap/level1.hpp"
#include "hopcap/solvers.hpp"
#include "hopcap/specfun.hpp"

namespace hopcap::level2 {

/// Level-2 order parameters. The boundary entries p1 = q1 = c1 -> 1 and
/// p3 = q3 = c3 = 0 are implicit.
struct LiftingParams {
  double p2 = 0.0;
  double q2 = 0.0;
  double c2 = 0.0;
  double gamma_sq = 0.0;
  double nu = 0.0;
};

/// Throws DomainError unless 0 <= p2, q2 < 1, c2 > 0, gamma_sq > 0 and
/// 2 gamma_sq - c2 (1 - p2) > 0.
void validate(const LiftingParams& pq);

/// Gradient order: p2, q2, c2, gamma_sq, nu.
using Gradient = std::array<double, 5>;
inline constexpr std::array<const char*, 5> kParamNames{"p2", "q2", "c2", "gamma_sq", "nu"};

/// Inner integrals at one outer node h3. The factors themselves can be huge
/// at large c2, so they are kept as logarithms.
struct InnerFactors {
  double b_hat = 0.0;
  double a_hat = 0.0;
  double log_f_zu = 0.0;
  double log_f_zd = 0.0;
  double log_f_zt = 0.0;

  [[nodiscard]] double f_zu() const;
  [[nodiscard]] double f_zd() const;
  [[nodiscard]] double f_zt() const;
};

/// Throws EvaluationError if a log factor exceeds 700 in magnitude.
InnerFactors inner_factors(double h3, const LiftingParams& pq);

/// Outer rule adapted to the integrand at pq (see make_focused_rule).
specfun::QuadratureRule rule_for(const LiftingParams& pq, int order = specfun::kDefaultQuadOrder);

double psi_rd_l2(const LiftingParams& pq, double alpha, double delta, const specfun::QuadratureRule& rule);
double psi_rd_l2(const LiftingParams& pq, double alpha, double delta, int order = specfun::kDefaultQuadOrder);

/// Analytic partial derivatives of psi_rd_l2. The q2 entry is NaN at q2 = 0.
Gradient grad_psi_l2(const LiftingParams& pq, double alpha, double delta, const specfun::QuadratureRule& rule);
Gradient grad_psi_l2(const LiftingParams& pq, double alpha, double delta, int order = specfun::kDefaultQuadOrder);

/// alpha p2 / (2 gamma_sq - c2 (1 - p2))^2
double closed_form_q2(const LiftingParams& pq, double alpha);
/// (1/2) ((1 - p2)/(1 - q2)) sqrt(q2 alpha / p2)
double gamma_from_pq(double p2, double q2, double alpha);
/// sqrt(q2 alpha / p2) / (1 - q2) - sqrt(p2 alpha / q2) / (1 - p2); positive iff q2 > p2.
double c2_from_pq(double p2, double q2, double alpha);
/// Full parameter record with gamma_sq and c2 taken from the closed forms.
LiftingParams complete_from_pq(double p2, double q2, double nu, double alpha);

struct Level2Options {
  int quad_order = specfun::kDefaultQuadOrder;
  solvers::SolverConfig solver{1e-8, 1e-12, 100, 0.5};
};

struct Level2Solution {
  double alpha_c = 0.0;  ///< alpha of the solve (the capacity for capacity_* results)
  double delta_hat = 0.0;
  LiftingParams params;
  Gradient residuals{};
  double psi = 0.0;
  /// The stationary point degenerated (c2 -> 0, p2 = q2); psi is the level-1 value.
  bool collapsed = false;
  solvers::SolveReport<solvers::Vector> diagnostics;
};

/// Newton on the (q2, c2, nu) derivatives with p2, gamma_sq eliminated by the
/// closed forms. `init` needs q2 > p2. Throws DomainError on an infeasible init.
Level2Solution solve_stationary_l2(double alpha, double delta, const LiftingParams& init,
                                   const Level2Options& opt = {});

/// Tries `hint` (if any) and then a fixed set of seeds; returns the first
/// non-degenerate converged point, or a collapsed solution carrying the
/// level-1 value when none exists.
Level2Solution solve_point_l2(double alpha, double delta, const std::optional<LiftingParams>& hint,
                              const Level2Options& opt = {});

/// -(1 - 2 delta)^2 - psi^2 at the stationary point.
double xi1_l2(double delta, double alpha, const Level2Options& opt = {});

struct Level2Capacity {
  BasinKind basin = BasinKind::ags;
  double alpha_c = 0.0;
  double delta_hat = 0.0;
  /// The solution behind the reported parameters (delta = 0.5 branch for GLM).
  Level2Solution solution;
  /// GLM only: the minimizing delta branch, which collapses to level 1.
  std::optional<Level2Solution> min_branch;
  solvers::SolveReport<double> outer;
};

Level2Capacity capacity_ags_l2(const Level2Options& opt = {});
Level2Capacity capacity_nlt_l2(const Level2Options& opt = {});
Level2Capacity capacity_glm_l2(const Level2Options& opt = {});
Level2Capacity capacity_l2(BasinKind kind, const Level2Options& opt = {});

/// Continuation in delta; failed points carry ok = false and NaN fields.
std::vector<CurvePoint> curve_l2(double alpha, std::span<const double> deltas, const Level2Options& opt = {});

}  // namespace hopcap::level2
