#include "hopcap/level1.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <fmt/core.h>

#include "hopcap/specfun.hpp"

namespace hopcap {

std::string to_string(BasinKind kind) {
  switch (kind) {
    case BasinKind::ags: return "ags";
    case BasinKind::nlt: return "nlt";
    case BasinKind::glm: return "glm";
  }
  return "?";
}

BasinKind parse_basin(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "ags") return BasinKind::ags;
  if (lower == "nlt") return BasinKind::nlt;
  if (lower == "glm") return BasinKind::glm;
  throw std::invalid_argument(fmt::format("unknown basin '{}' (expected ags, nlt or glm)", name));
}

}  // namespace hopcap

namespace hopcap::level1 {
namespace {

using std::numbers::pi;
const double kTwoOverSqrt2Pi = 2.0 / std::sqrt(2.0 * pi);
const double kSqrt2 = std::numbers::sqrt2;

void check_delta(double delta, const char* who) {
  if (!(delta > 0.0 && delta < 1.0)) {
    throw DomainError(fmt::format("{}: delta = {} outside (0, 1)", who, delta));
  }
}

void check_alpha(double alpha, const char* who) {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
    throw DomainError(fmt::format("{}: alpha = {} must be finite and >= 0", who, alpha));
  }
}

// x = erfinv(1 - 2 delta), evaluated through erfcinv so tiny delta keeps its digits.
double x_of(double delta) { return delta == 0.5 ? 0.0 : specfun::erfcinv_fn(2.0 * delta); }

// (1 - 2 delta) / (sqrt2 x) - (2/sqrt(2 pi)) e^{-x^2}: sqrt(alpha) on the dxi1 = 0 curve.
double sqrt_alpha_stationary(double delta) {
  const double x = x_of(delta);
  return (1.0 - 2.0 * delta) / (kSqrt2 * x) - kTwoOverSqrt2Pi * std::exp(-x * x);
}

double ags_equation(double delta) {
  const double x = x_of(delta);
  const double e = std::exp(-x * x);
  return 4.0 * (1.0 - 2.0 * delta) -
         4.0 * kSqrt2 * x * (kTwoOverSqrt2Pi * e + 2.0 * kTwoOverSqrt2Pi * x * x * e);
}

double nlt_equation(double delta) {
  const double x = x_of(delta);
  const double e = std::exp(-x * x);
  return 2.0 * delta * (1.0 - delta) - (1.0 - 2.0 * delta) / (std::sqrt(pi) * x) * e + e * e / pi;
}

double glm_equation(double delta) {
  const double x = x_of(delta);
  const double lhs = (1.0 - 2.0 * delta) * (std::sqrt(1.0 + 1.0 / (2.0 * x * x)) - 1.0 / (kSqrt2 * x));
  // 1 - e^{-x^2} via expm1 keeps digits when x is small
  return lhs + kTwoOverSqrt2Pi * std::expm1(-x * x);
}

Level1Solution finish(BasinKind kind, double delta, double alpha, double alpha_check,
                      solvers::SolveReport<double> rep) {
  Level1Solution s;
  s.basin = kind;
  s.delta_hat = delta;
  s.alpha_c = alpha;
  s.alpha_check = alpha_check;
  s.nu_hat = nu_hat_l1(delta);
  s.gamma_sq_hat = std::sqrt(alpha) / 2.0;
  s.diagnostics = std::move(rep);
  return s;
}

}  // namespace

double nu_hat_l1(double delta) {
  check_delta(delta, "nu_hat_l1");
  return -kSqrt2 * x_of(delta);
}

double f1_opt(double delta) {
  if (delta <= 0.0 || delta >= 1.0) {
    if (delta == 0.0 || delta == 1.0) return 0.0;
    check_delta(delta, "f1_opt");
  }
  const double x = x_of(delta);
  return kTwoOverSqrt2Pi * std::exp(-x * x);
}

double f1_general(double nu, double delta) {
  // E[2 max(nu - h, 0)] = 2 (phi(nu) + nu Phi(nu))
  return 2.0 * (specfun::normal_pdf(nu) + nu * specfun::normal_cdf(nu)) - 2.0 * nu * delta;
}

double psi_rd_l1(double nu, double gamma_sq, double alpha, double delta) {
  if (!(gamma_sq > 0.0)) throw DomainError(fmt::format("psi_rd_l1: gamma_sq = {} must be > 0", gamma_sq));
  return f1_general(nu, delta) + gamma_sq + alpha / (4.0 * gamma_sq);
}

double xi_l1(double delta, double alpha) {
  check_alpha(alpha, "xi_l1");
  return f1_opt(delta) + std::sqrt(alpha);
}

double xi1_l1(double delta, double alpha) {
  check_alpha(alpha, "xi1_l1");
  if (delta == 0.0) return -1.0 - alpha;
  const double xi = xi_l1(delta, alpha);
  return -(1.0 - 2.0 * delta) * (1.0 - 2.0 * delta) - xi * xi;
}

double dxi1_l1(double delta, double alpha) {
  check_delta(delta, "dxi1_l1");
  check_alpha(alpha, "dxi1_l1");
  const double x = x_of(delta);
  return 4.0 * (1.0 - 2.0 * delta) - 4.0 * kSqrt2 * x * (kTwoOverSqrt2Pi * std::exp(-x * x) + std::sqrt(alpha));
}

double d2xi1_l1(double delta, double alpha) {
  check_delta(delta, "d2xi1_l1");
  check_alpha(alpha, "d2xi1_l1");
  const double x = x_of(delta);
  return -16.0 * x * x + 4.0 * std::sqrt(2.0 * pi) * std::sqrt(alpha) * std::exp(x * x);
}

Level1Solution capacity_ags_l1(const solvers::SolverConfig& cfg) {
  auto rep = solvers::find_root(ags_equation, 1e-4, 0.2, cfg);
  const double delta = rep.value;
  const double x = x_of(delta);
  const double sa = 2.0 * kTwoOverSqrt2Pi * x * x * std::exp(-x * x);

  // the max form, squared
  auto g = [](double d) { return sqrt_alpha_stationary(d); };
  auto best = solvers::maximize_multistart(g, 1e-4, 0.2, 8, cfg);
  const double alpha_max = best.max_value * best.max_value;
  if (std::abs(alpha_max - sa * sa) > 1e-7) {
    rep.converged = false;
    rep.message = fmt::format("AGS routes disagree: {} vs {}", sa * sa, alpha_max);
  }
  return finish(BasinKind::ags, delta, sa * sa, alpha_max, std::move(rep));
}

Level1Solution capacity_nlt_l1(const solvers::SolverConfig& cfg) {
  auto rep = solvers::find_root(nlt_equation, 0.01, 0.1, cfg);
  const double delta = rep.value;
  const double sa = sqrt_alpha_stationary(delta);
  const double alpha = sa * sa;

  const double x = x_of(delta);
  const double er = 1.0 - 2.0 * delta;  // erf(x)
  const double compact = er * er / (2.0 * x * x) - 1.0 + er * er;
  const double x_residual = 1.0 - er * er - 2.0 * er * std::exp(-x * x) / (std::sqrt(pi) * x) +
                            2.0 * std::exp(-2.0 * x * x) / pi;
  if (std::abs(compact - alpha) > 1e-8 || std::abs(x_residual) > 1e-8) {
    rep.converged = false;
    rep.message = fmt::format("NLT compact form mismatch: alpha {} vs {}, residual {}", alpha, compact, x_residual);
  }
  return finish(BasinKind::nlt, delta, alpha, compact, std::move(rep));
}

Level1Solution capacity_glm_l1(const solvers::SolverConfig& cfg) {
  // The equation changes sign again near delta ~ 0.3, so the search runs in
  // log(delta) on a bracket holding only the small root.
  auto in_log = [](double u) { return glm_equation(std::exp(u)); };
  auto rep = solvers::find_root(in_log, std::log(1e-9), std::log(1e-4), cfg);
  const double delta = std::exp(rep.value);
  rep.value = delta;
  const double x = x_of(delta);
  const double line1 = (1.0 - 2.0 * delta) * std::sqrt(1.0 + 1.0 / (2.0 * x * x)) - kTwoOverSqrt2Pi;
  const double line2 = sqrt_alpha_stationary(delta);
  if (std::abs(line1 - line2) > 1e-8) {
    rep.converged = false;
    rep.message = fmt::format("GLM sqrt(alpha) lines disagree: {} vs {}", line1, line2);
  }
  return finish(BasinKind::glm, delta, line2 * line2, line1 * line1, std::move(rep));
}

Level1Solution capacity_l1(BasinKind kind, const solvers::SolverConfig& cfg) {
  switch (kind) {
    case BasinKind::ags: return capacity_ags_l1(cfg);
    case BasinKind::nlt: return capacity_nlt_l1(cfg);
    case BasinKind::glm: return capacity_glm_l1(cfg);
  }
  throw std::invalid_argument("capacity_l1: bad basin");
}

std::vector<CurvePoint> curve_l1(double alpha, std::span<const double> deltas) {
  check_alpha(alpha, "curve_l1");
  std::vector<CurvePoint> out;
  out.reserve(deltas.size());
  const double base = -1.0 - alpha;
  for (double d : deltas) {
    if (!(d >= 0.0 && d <= 0.5)) throw DomainError(fmt::format("curve_l1: delta = {} outside [0, 1/2]", d));
    CurvePoint p;
    p.delta = d;
    p.xi = d == 0.0 ? std::sqrt(alpha) : xi_l1(d, alpha);
    p.xi1 = xi1_l1(d, alpha);
    p.xi_tot = d == 0.0 ? 0.0 : p.xi1 - base;
    out.push_back(p);
  }
  return out;
}

}  // namespace hopcap::level1
