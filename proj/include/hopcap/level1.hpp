#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hopcap/solvers.hpp"

namespace hopcap {

enum class BasinKind { ags, nlt, glm };

std::string to_string(BasinKind kind);
/// Accepts "ags", "nlt", "glm" (case-insensitive); throws std::invalid_argument otherwise.
BasinKind parse_basin(std::string_view name);

/// One sample of the energy landscape; xi_tot = xi1(delta) - xi1(0).
/// `ok` is false when a level-2 point failed to solve (other fields NaN).
struct CurvePoint {
  double delta = 0.0;
  double xi = 0.0;
  double xi1 = 0.0;
  double xi_tot = 0.0;
  bool ok = true;
};

}  // namespace hopcap

namespace hopcap::level1 {

struct Level1Solution {
  BasinKind basin = BasinKind::ags;
  double alpha_c = 0.0;
  double delta_hat = 0.0;
  double nu_hat = 0.0;
  double gamma_sq_hat = 0.0;
  /// alpha from the independent second route (max form for AGS, compact
  /// form for NLT, other line of the sqrt(alpha) pair for GLM)
  double alpha_check = 0.0;
  solvers::SolveReport<double> diagnostics;
};

/// -sqrt(2) erfinv(1 - 2 delta); exact 0 at delta = 1/2.
double nu_hat_l1(double delta);

/// (2/sqrt(2 pi)) exp(-nu_hat^2 / 2); the delta -> 0 and delta -> 1 limits are 0.
double f1_opt(double delta);

/// E[2 max(nu - h, 0)] - 2 nu delta in closed form, for arbitrary nu.
double f1_general(double nu, double delta);

/// First-level functional for free (nu, gamma_sq): f1(nu) + gamma_sq + alpha / (4 gamma_sq).
double psi_rd_l1(double nu, double gamma_sq, double alpha, double delta);

/// Stationary value f1_opt(delta) + sqrt(alpha).
double xi_l1(double delta, double alpha);

/// -(1 - 2 delta)^2 - xi_l1^2, with xi1(0) = -1 - alpha.
double xi1_l1(double delta, double alpha);

double dxi1_l1(double delta, double alpha);
double d2xi1_l1(double delta, double alpha);

Level1Solution capacity_ags_l1(const solvers::SolverConfig& cfg = {});
Level1Solution capacity_nlt_l1(const solvers::SolverConfig& cfg = {});
Level1Solution capacity_glm_l1(const solvers::SolverConfig& cfg = {});
Level1Solution capacity_l1(BasinKind kind, const solvers::SolverConfig& cfg = {});

std::vector<CurvePoint> curve_l1(double alpha, std::span<const double> deltas);

}  // namespace hopcap::level1
