#include "hopcap/level2.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/core.h>

namespace hopcap::level2 {
namespace {

constexpr double kLogGuard = 700.0;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double sphere_denominator(const LiftingParams& pq) { return 2.0 * pq.gamma_sq - pq.c2 * (1.0 - pq.p2); }

// Per-node pieces shared by psi and its gradient.
struct Node {
  double s, m, a, b, lu, ld, log_f;
};

Node node_at(double h, const LiftingParams& pq) {
  Node n{};
  n.s = std::sqrt(1.0 - pq.q2);
  n.m = std::sqrt(pq.q2) * h;
  n.a = pq.c2 * n.s;
  n.b = (n.m - pq.nu) / n.s;
  n.lu = pq.c2 * n.m + specfun::log_normal_cdf(n.a + n.b);
  n.ld = 2.0 * pq.c2 * pq.nu - pq.c2 * n.m + specfun::log_normal_cdf(n.a - n.b);
  n.log_f = 0.5 * n.a * n.a + specfun::log_add_exp(n.lu, n.ld);
  return n;
}

void check_alpha_delta(double alpha, double delta, const char* who) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw DomainError(fmt::format("{}: alpha = {} must be > 0", who, alpha));
  if (!(delta > 0.0 && delta <= 0.5)) throw DomainError(fmt::format("{}: delta = {} outside (0, 1/2]", who, delta));
}

double sphere_term(const LiftingParams& pq) {
  const double d = sphere_denominator(pq);
  return -std::log1p(-pq.c2 * (1.0 - pq.p2) / (2.0 * pq.gamma_sq)) / (2.0 * pq.c2) + pq.p2 / (2.0 * d);
}

void check_pq(double p2, double q2, const char* who) {
  if (!(p2 > 0.0 && p2 < 1.0 && q2 > 0.0 && q2 < 1.0)) {
    throw DomainError(fmt::format("{}: need p2, q2 in (0, 1); got {}, {}", who, p2, q2));
  }
}

}  // namespace

void validate(const LiftingParams& pq) {
  if (!(pq.p2 >= 0.0 && pq.p2 < 1.0) || !(pq.q2 >= 0.0 && pq.q2 < 1.0)) {
    throw DomainError(fmt::format("LiftingParams: p2 = {}, q2 = {} must lie in [0, 1)", pq.p2, pq.q2));
  }
  if (!(pq.c2 > 0.0) || !(pq.gamma_sq > 0.0) || !std::isfinite(pq.nu) || !std::isfinite(pq.c2)) {
    throw DomainError(fmt::format("LiftingParams: need c2 > 0, gamma_sq > 0, finite nu; got c2 = {}, gamma_sq = {}, nu = {}",
                                  pq.c2, pq.gamma_sq, pq.nu));
  }
  if (!(sphere_denominator(pq) > 0.0)) {
    throw DomainError(fmt::format("LiftingParams: 2 gamma_sq - c2 (1 - p2) = {} must be > 0", sphere_denominator(pq)));
  }
}

double InnerFactors::f_zu() const { return std::exp(log_f_zu); }
double InnerFactors::f_zd() const { return std::exp(log_f_zd); }
double InnerFactors::f_zt() const { return std::exp(log_f_zt); }

InnerFactors inner_factors(double h3, const LiftingParams& pq) {
  if (!(pq.q2 >= 0.0 && pq.q2 < 1.0) || !(pq.c2 > 0.0)) {
    throw DomainError(fmt::format("inner_factors: need q2 in [0, 1), c2 > 0; got {}, {}", pq.q2, pq.c2));
  }
  const Node n = node_at(h3, pq);
  InnerFactors f;
  f.a_hat = n.a;
  f.b_hat = n.b;
  f.log_f_zu = 0.5 * n.a * n.a + n.lu;
  f.log_f_zd = 0.5 * n.a * n.a + n.ld;
  f.log_f_zt = n.log_f;
  if (!(std::abs(f.log_f_zu) <= kLogGuard && std::abs(f.log_f_zd) <= kLogGuard)) {
    throw EvaluationError(fmt::format("inner_factors: log factors {}, {} exceed {} at h3 = {}", f.log_f_zu,
                                      f.log_f_zd, kLogGuard, h3));
  }
  return f;
}

specfun::QuadratureRule rule_for(const LiftingParams& pq, int order) {
  const double center = pq.q2 > 0.0 ? pq.nu / std::sqrt(pq.q2) : 0.0;
  const double scale = std::min(1.0, 4.0 * std::sqrt(1.0 - pq.q2));
  return specfun::make_focused_rule(order, center, scale);
}

double psi_rd_l2(const LiftingParams& pq, double alpha, double delta, const specfun::QuadratureRule& rule) {
  validate(pq);
  check_alpha_delta(alpha, delta, "psi_rd_l2");
  const double e_log = specfun::expect([&](double h) { return node_at(h, pq).log_f; }, rule);
  return -0.5 * (1.0 - pq.p2 * pq.q2) * pq.c2 - 2.0 * pq.nu * delta + e_log / pq.c2 + pq.gamma_sq +
         alpha * sphere_term(pq);
}

double psi_rd_l2(const LiftingParams& pq, double alpha, double delta, int order) {
  validate(pq);
  return psi_rd_l2(pq, alpha, delta, rule_for(pq, order));
}

Gradient grad_psi_l2(const LiftingParams& pq, double alpha, double delta, const specfun::QuadratureRule& rule) {
  validate(pq);
  check_alpha_delta(alpha, delta, "grad_psi_l2");
  // the q2 component carries 1/sqrt(q2); at q2 = 0 it is reported as NaN
  const bool origin = !(pq.q2 > 0.0);
  const double c2 = pq.c2;
  const double sq = std::sqrt(pq.q2);
  double e_log = 0.0, e_q = 0.0, e_c = 0.0, e_nu = 0.0;
  const auto nodes = rule.nodes();
  const auto weights = rule.weights();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const double h = nodes[i];
    const Node n = node_at(h, pq);
    // softmax weights of the two branches of f_zt
    const double wu = 1.0 / (1.0 + std::exp(n.ld - n.lu));
    const double wd = 1.0 - wu;
    const double ru = specfun::inverse_mills(n.a + n.b);
    const double rd = specfun::inverse_mills(n.a - n.b);
    const double s3 = n.s * n.s * n.s;

    const double dm_q = origin ? 0.0 : h / (2.0 * sq);
    const double da_q = -c2 / (2.0 * n.s);
    const double db_q = (origin ? 0.0 : h / (2.0 * sq * s3)) - pq.nu / (2.0 * s3);
    const double fq_u = c2 * dm_q + n.a * da_q + ru * (da_q + db_q);
    const double fq_d = -c2 * dm_q + n.a * da_q + rd * (da_q - db_q);

    const double fc_u = n.m + n.a * n.s + ru * n.s;
    const double fc_d = 2.0 * pq.nu - n.m + n.a * n.s + rd * n.s;

    const double fn_u = -ru / n.s;
    const double fn_d = 2.0 * c2 + rd / n.s;

    const double terms[4] = {n.log_f, wu * fq_u + wd * fq_d, wu * fc_u + wd * fc_d, wu * fn_u + wd * fn_d};
    for (double t : terms) {
      if (!std::isfinite(t)) throw EvaluationError(fmt::format("grad_psi_l2: non-finite integrand at h3 = {}", h));
    }
    e_log += weights[i] * terms[0];
    e_q += weights[i] * terms[1];
    e_c += weights[i] * terms[2];
    e_nu += weights[i] * terms[3];
  }
  const double d = sphere_denominator(pq);
  const double p2 = pq.p2;
  Gradient g{};
  g[0] = c2 * (0.5 * pq.q2 - alpha * p2 / (2.0 * d * d));
  g[1] = origin ? kNaN : 0.5 * p2 * c2 + e_q / c2;
  g[2] = -0.5 * (1.0 - p2 * pq.q2) - e_log / (c2 * c2) + e_c / c2 +
         alpha * (std::log1p(-c2 * (1.0 - p2) / (2.0 * pq.gamma_sq)) / (2.0 * c2 * c2) + (1.0 - p2) / (2.0 * c2 * d) +
                  p2 * (1.0 - p2) / (2.0 * d * d));
  g[3] = 1.0 + alpha * (-(1.0 - p2) / (2.0 * pq.gamma_sq * d) - p2 / (d * d));
  g[4] = -2.0 * delta + e_nu / c2;
  return g;
}

Gradient grad_psi_l2(const LiftingParams& pq, double alpha, double delta, int order) {
  validate(pq);
  return grad_psi_l2(pq, alpha, delta, rule_for(pq, order));
}

double closed_form_q2(const LiftingParams& pq, double alpha) {
  const double d = sphere_denominator(pq);
  if (!(d > 0.0)) throw DomainError(fmt::format("closed_form_q2: 2 gamma_sq - c2 (1 - p2) = {} must be > 0", d));
  return alpha * pq.p2 / (d * d);
}

double gamma_from_pq(double p2, double q2, double alpha) {
  check_pq(p2, q2, "gamma_from_pq");
  return 0.5 * ((1.0 - p2) / (1.0 - q2)) * std::sqrt(q2 * alpha / p2);
}

double c2_from_pq(double p2, double q2, double alpha) {
  check_pq(p2, q2, "c2_from_pq");
  return std::sqrt(q2 * alpha / p2) / (1.0 - q2) - std::sqrt(p2 * alpha / q2) / (1.0 - p2);
}

LiftingParams complete_from_pq(double p2, double q2, double nu, double alpha) {
  return {p2, q2, c2_from_pq(p2, q2, alpha), gamma_from_pq(p2, q2, alpha), nu};
}

}  // namespace hopcap::level2

namespace hopcap::level2 {
namespace {

// Unconstrained coordinates: z0 = logit q2, z1 = log((1 - p2)/(1 - q2) - 1), z2 = nu.
// Any z with p2 > 0 gives q2 > p2 and hence c2 > 0.
struct Reduced {
  double p2, q2, nu;
  bool ok;
};

Reduced from_z(std::span<const double> z) {
  const double q2 = 1.0 / (1.0 + std::exp(-z[0]));
  const double omq = 1.0 / (1.0 + std::exp(z[0]));
  const double omp = omq * (1.0 + std::exp(z[1]));
  return {1.0 - omp, q2, z[2], omp < 1.0 && q2 < 1.0 && omq > 0.0 && std::isfinite(omp)};
}

solvers::Vector to_z(double p2, double q2, double nu) {
  const double omq = 1.0 - q2;
  return {std::log(q2 / omq), std::log((1.0 - p2) / omq - 1.0), nu};
}

constexpr double kMaxC2 = 1e3;

// Degenerate stationary points: c2 -> 0 or p2 = q2 (then psi is the level-1
// value), or p2, q2 -> 1.
bool is_collapsed(const LiftingParams& pq) {
  return pq.c2 < 1e-4 || 1.0 - pq.q2 < 1e-5 || (1.0 - pq.p2) / (1.0 - pq.q2) - 1.0 < 1e-3;
}

Level2Solution collapsed_solution(double alpha, double delta) {
  Level2Solution s;
  s.alpha_c = alpha;
  s.delta_hat = delta;
  s.collapsed = true;
  s.params = {1.0, 1.0, 0.0, std::sqrt(alpha) / 2.0, level1::nu_hat_l1(delta)};
  s.psi = level1::xi_l1(delta, alpha);
  s.diagnostics.converged = true;
  s.diagnostics.message = "collapsed to the level-1 limit";
  return s;
}

}  // namespace

Level2Solution solve_stationary_l2(double alpha, double delta, const LiftingParams& init, const Level2Options& opt) {
  check_alpha_delta(alpha, delta, "solve_stationary_l2");
  if (!(init.q2 > init.p2 && init.p2 > 0.0 && init.q2 < 1.0) || !std::isfinite(init.nu)) {
    throw DomainError(fmt::format("solve_stationary_l2: init needs 0 < p2 < q2 < 1 and finite nu; got p2 = {}, q2 = {}",
                                  init.p2, init.q2));
  }
  const bool symmetric = delta == 0.5;
  auto residual = [&](std::span<const double> z) -> solvers::Vector {
    const Reduced r = from_z(z);
    // at delta = 1/2 the nu equation is solved by symmetry
    const double nu = symmetric ? 0.0 : r.nu;
    if (!r.ok || !(r.p2 > 0.0)) return {kNaN, kNaN, kNaN};
    try {
      const LiftingParams pq = complete_from_pq(r.p2, r.q2, nu, alpha);
      if (pq.c2 > kMaxC2) return {kNaN, kNaN, kNaN};
      const Gradient g = grad_psi_l2(pq, alpha, delta, opt.quad_order);
      return {g[1], g[2], symmetric ? z[2] : g[4]};
    } catch (const std::exception&) {
      return {kNaN, kNaN, kNaN};
    }
  };
  auto z0 = to_z(init.p2, init.q2, symmetric ? 0.0 : init.nu);
  Level2Solution sol;
  sol.alpha_c = alpha;
  sol.delta_hat = delta;
  sol.diagnostics = solvers::solve_damped(residual, z0, opt.solver);
  const Reduced r = from_z(sol.diagnostics.value);
  if (!r.ok || !(r.p2 > 0.0)) {
    sol.diagnostics.converged = false;
    return sol;
  }
  sol.params = complete_from_pq(r.p2, r.q2, symmetric ? 0.0 : r.nu, alpha);
  try {
    sol.residuals = grad_psi_l2(sol.params, alpha, delta, opt.quad_order);
    sol.psi = psi_rd_l2(sol.params, alpha, delta, opt.quad_order);
  } catch (const std::exception& e) {
    sol.diagnostics.converged = false;
    sol.diagnostics.message = e.what();
  }
  sol.collapsed = is_collapsed(sol.params);
  return sol;
}

Level2Solution solve_point_l2(double alpha, double delta, const std::optional<LiftingParams>& hint,
                              const Level2Options& opt) {
  std::vector<LiftingParams> seeds;
  if (hint && hint->q2 > hint->p2 && hint->p2 > 0.0 && hint->q2 < 1.0) seeds.push_back(*hint);
  const double nu = level1::nu_hat_l1(delta);
  // 1 - q2 grows roughly like delta^1.4 along the non-degenerate branch
  const double guess = std::min(0.3, 0.103 * std::pow(delta / 0.2, 1.42));
  const double ratio = 1.15 + delta;
  for (double f : {1.0, 0.5, 2.0, 0.25, 4.0}) {
    const double omq = std::min(0.6, guess * f);
    seeds.push_back({1.0 - omq * ratio, 1.0 - omq, 0.0, 0.0, nu});
  }
  for (const auto& s : seeds) {
    Level2Solution sol = solve_stationary_l2(alpha, delta, s, opt);
    if (sol.diagnostics.converged && !sol.collapsed) return sol;
  }
  return collapsed_solution(alpha, delta);
}

double xi1_l2(double delta, double alpha, const Level2Options& opt) {
  const Level2Solution s = solve_point_l2(alpha, delta, std::nullopt, opt);
  return -(1.0 - 2.0 * delta) * (1.0 - 2.0 * delta) - s.psi * s.psi;
}

}  // namespace hopcap::level2

namespace hopcap::level2 {
namespace {

// A solved point on a delta sweep.
struct Sample {
  double delta;
  Level2Solution sol;
};

std::optional<LiftingParams> hint_of(const Level2Solution& s) {
  if (s.collapsed || !s.diagnostics.converged) return std::nullopt;
  return s.params;
}

// Maximizes score(delta, solution) over [lo, hi]: a descending continuation
// grid followed by golden-section refinement around the best grid point.
struct WindowMax {
  double delta;
  double value;
  Level2Solution sol;
};

template <class Score>
WindowMax window_max(double alpha, double lo, double hi, int grid, Score score, const Level2Options& opt,
                     std::optional<LiftingParams> hint = std::nullopt) {
  std::vector<Sample> samples;
  samples.reserve(grid);
  for (int k = grid - 1; k >= 0; --k) {
    const double d = lo + (hi - lo) * k / (grid - 1);
    Level2Solution s = solve_point_l2(alpha, d, hint, opt);
    if (auto h = hint_of(s)) hint = h;
    samples.push_back({d, std::move(s)});
  }
  std::size_t best = 0;
  double best_value = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double v = score(samples[i].delta, samples[i].sol);
    if (v > best_value) {
      best_value = v;
      best = i;
    }
  }
  const double step = (hi - lo) / (grid - 1);
  const double a = std::max(lo, samples[best].delta - step);
  const double b = std::min(hi, samples[best].delta + step);
  std::optional<LiftingParams> local = hint_of(samples[best].sol);
  Level2Solution last = samples[best].sol;
  auto f = [&](double d) {
    Level2Solution s = solve_point_l2(alpha, d, local, opt);
    if (auto h = hint_of(s)) local = h;
    const double v = score(d, s);
    last = std::move(s);
    return v;
  };
  solvers::SolverConfig gcfg{1e-12, 1e-7, 200, 0.5};
  const auto m = solvers::maximize_scalar(f, a, b, gcfg);
  if (m.max_value < best_value) return {samples[best].delta, best_value, samples[best].sol};
  Level2Solution at = solve_point_l2(alpha, m.value, local, opt);
  return {m.value, score(m.value, at), std::move(at)};
}

double ags_defect(double delta, const Level2Solution& s) { return 4.0 * (1.0 - 2.0 * delta) + 4.0 * s.params.nu * s.psi; }

double xi_tot_of(double delta, double alpha, const Level2Solution& s) {
  return -(1.0 - 2.0 * delta) * (1.0 - 2.0 * delta) - s.psi * s.psi + 1.0 + alpha;
}

// Brent on alpha for a function that must change sign on [lo, hi].
template <class F>
solvers::SolveReport<double> alpha_root(F f, double lo, double hi) {
  solvers::SolverConfig cfg{1e-12, 1e-9, 100, 0.5};
  return solvers::find_root(f, lo, hi, cfg);
}

}  // namespace

Level2Capacity capacity_ags_l2(const Level2Options& opt) {
  const double a1 = level1::capacity_ags_l1().alpha_c;
  std::optional<LiftingParams> hint;
  auto G = [&](double alpha) {
    auto w = window_max(alpha, 0.006, 0.04, 64, ags_defect, opt, hint);
    if (auto h = hint_of(w.sol)) hint = h;
    return w.value;
  };
  Level2Capacity cap;
  cap.basin = BasinKind::ags;
  cap.outer = alpha_root(G, a1, a1 + 0.003);
  cap.alpha_c = cap.outer.value;
  auto w = window_max(cap.alpha_c, 0.006, 0.04, 64, ags_defect, opt, hint);
  cap.delta_hat = w.delta;
  cap.solution = std::move(w.sol);
  return cap;
}

Level2Capacity capacity_nlt_l2(const Level2Options& opt) {
  const double a1 = level1::capacity_nlt_l1().alpha_c;
  std::optional<LiftingParams> hint;
  auto H = [&](double alpha) {
    auto score = [alpha](double d, const Level2Solution& s) { return xi_tot_of(d, alpha, s); };
    auto w = window_max(alpha, 0.015, 0.12, 64, score, opt, hint);
    if (auto h = hint_of(w.sol)) hint = h;
    return w.value;
  };
  Level2Capacity cap;
  cap.basin = BasinKind::nlt;
  cap.outer = alpha_root(H, a1, a1 + 0.003);
  cap.alpha_c = cap.outer.value;
  auto score = [&](double d, const Level2Solution& s) { return xi_tot_of(d, cap.alpha_c, s); };
  auto w = window_max(cap.alpha_c, 0.015, 0.12, 64, score, opt, hint);
  cap.delta_hat = w.delta;
  cap.solution = std::move(w.sol);
  return cap;
}

namespace {

// Minimum of the level-1 xi1 over small delta, searched in log(delta).
std::pair<double, double> l1_min_small_delta(double alpha) {
  auto neg = [alpha](double u) { return -level1::xi1_l1(std::exp(u), alpha); };
  solvers::SolverConfig cfg{1e-12, 1e-10, 300, 0.5};
  const auto m = solvers::maximize_multistart(neg, std::log(1e-9), std::log(1e-2), 8, cfg);
  return {std::exp(m.value), -m.max_value};
}

}  // namespace

Level2Capacity capacity_glm_l2(const Level2Options& opt) {
  const double a1 = level1::capacity_glm_l1().alpha_c;
  std::optional<LiftingParams> hint;
  auto half = [&](double alpha) {
    Level2Solution s = solve_point_l2(alpha, 0.5, hint, opt);
    if (auto h = hint_of(s)) hint = h;
    return s;
  };
  // The minimizing branch collapses to level 1 (p2, q2 -> 1, c2 -> 0), so its
  // depth comes from the closed form; the collapse is re-checked at the end.
  auto F = [&](double alpha) {
    const Level2Solution s = half(alpha);
    return l1_min_small_delta(alpha).second + s.psi * s.psi;
  };
  Level2Capacity cap;
  cap.basin = BasinKind::glm;
  cap.outer = alpha_root(F, a1, a1 + 0.015);
  cap.alpha_c = cap.outer.value;
  cap.solution = half(cap.alpha_c);
  const auto [dmin, xmin] = l1_min_small_delta(cap.alpha_c);
  (void)xmin;
  cap.delta_hat = dmin;
  cap.min_branch = solve_point_l2(cap.alpha_c, dmin, std::nullopt, opt);
  return cap;
}

Level2Capacity capacity_l2(BasinKind kind, const Level2Options& opt) {
  switch (kind) {
    case BasinKind::ags: return capacity_ags_l2(opt);
    case BasinKind::nlt: return capacity_nlt_l2(opt);
    case BasinKind::glm: return capacity_glm_l2(opt);
  }
  throw std::invalid_argument("capacity_l2: bad basin");
}

std::vector<CurvePoint> curve_l2(double alpha, std::span<const double> deltas, const Level2Options& opt) {
  std::vector<std::size_t> order(deltas.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  // continuation runs from large delta, where the branch is easiest to find
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return deltas[a] > deltas[b]; });
  std::vector<CurvePoint> out(deltas.size());
  std::optional<LiftingParams> hint;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i : order) {
    const double d = deltas[i];
    CurvePoint& p = out[i];
    p.delta = d;
    if (!(d >= 0.0 && d <= 0.5)) throw DomainError(fmt::format("curve_l2: delta = {} outside [0, 1/2]", d));
    if (d == 0.0) {
      p.xi = std::sqrt(alpha);
      p.xi1 = -1.0 - alpha;
      p.xi_tot = 0.0;
      continue;
    }
    try {
      Level2Solution s = solve_point_l2(alpha, d, hint, opt);
      if (auto h = hint_of(s)) hint = h;
      p.xi = s.psi;
      p.xi1 = -(1.0 - 2.0 * d) * (1.0 - 2.0 * d) - s.psi * s.psi;
      p.xi_tot = p.xi1 + 1.0 + alpha;
    } catch (const std::exception&) {
      p.ok = false;
      p.xi = p.xi1 = p.xi_tot = nan;
    }
  }
  return out;
}

}  // namespace hopcap::level2
