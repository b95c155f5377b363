#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "hopcap/level1.hpp"
#include "hopcap/level2.hpp"
#include "hopcap/solvers.hpp"
#include "oracles.hpp"

using namespace hopcap;
using namespace hopcap::level2;

namespace {

struct Row {
  double alpha, delta;
  LiftingParams pq;
};

// Second-level rows as printed: (alpha, delta, p2, q2, c2, gamma_sq, nu)
const Row kTable1{0.138186, 0.0167, {0.99645, 0.99694, 16.6192, 0.2153, -2.1252}};
const Row kTable2{0.12979, 0.0347, {0.98806, 0.99067, 8.54157, 0.2309, -1.8111}};
const Row kTable4{0.056141, 0.5, {0.5625, 0.7314, 0.5308, 0.2200, 0.0}};

// log E_{h2} exp(c2 (-2 min(s h2 + m - nu, 0) + s h2 + m)) split at the kink,
// each side integrated on its own half line.
std::pair<double, double> inner_by_quadrature(double h3, const LiftingParams& pq) {
  const double s = std::sqrt(1.0 - pq.q2), m = std::sqrt(pq.q2) * h3, c2 = pq.c2;
  const double k = (pq.nu - m) / s;
  const auto lower = oracle::half_line_rule(k);
  const auto upper = oracle::half_line_rule(-k);
  double lo = 0.0, up = 0.0;
  for (int i = 0; i < lower.order(); ++i) {
    const double h = lower.nodes()[i];
    lo += lower.weights()[i] * std::exp(c2 * (2.0 * pq.nu - s * h - m));
  }
  for (int i = 0; i < upper.order(); ++i) {
    const double h = -upper.nodes()[i];
    up += upper.weights()[i] * std::exp(c2 * (s * h + m));
  }
  return {std::log(up), std::log(lo)};
}

bool within(double got, double want, double tol) { return std::fabs(got - want) <= tol; }

void check_row(const Level2Solution& s, const Row& r) {
  CHECK(within(s.params.p2, r.pq.p2, 5e-3));
  CHECK(within(s.params.q2, r.pq.q2, 5e-3));
  CHECK(std::fabs(s.params.c2 / r.pq.c2 - 1.0) <= 1e-2);
  CHECK(within(s.params.gamma_sq, r.pq.gamma_sq, 5e-3));
  CHECK(within(s.params.nu, r.pq.nu, 5e-3));
}

void check_closed_forms(const Level2Solution& s, double alpha) {
  const auto& p = s.params;
  CHECK(std::fabs(p.q2 - closed_form_q2(p, alpha)) <= 1e-6);
  CHECK(std::fabs(p.gamma_sq - gamma_from_pq(p.p2, p.q2, alpha)) <= 1e-6);
  CHECK(std::fabs(p.c2 - c2_from_pq(p.p2, p.q2, alpha)) <= 1e-6);
}

}  // namespace

TEST_CASE("parameter validation") {
  CHECK_NOTHROW(validate(kTable1.pq));
  CHECK_THROWS_AS(validate({0.5, 0.6, 3.0, 0.2, -1.0}), DomainError);  // 2 gamma - c2 (1 - p2) < 0
  CHECK_THROWS_AS(validate({0.5, 1.0, 1.0, 1.0, 0.0}), DomainError);
  CHECK_THROWS_AS(validate({0.5, 0.6, 0.0, 1.0, 0.0}), DomainError);
  CHECK_THROWS_AS(psi_rd_l2({0.5, 0.6, 3.0, 0.2, -1.0}, 0.1, 0.1), DomainError);
}

TEST_CASE("inner factors: symmetric point") {
  const auto f = inner_factors(0.0, {0.0, 0.5, 1.0, 1.0, 0.0});
  CHECK(std::fabs(f.log_f_zu - f.log_f_zd) <= 1e-14);
  CHECK(std::fabs(f.f_zt() - (f.f_zu() + f.f_zd())) <= 1e-14 * f.f_zt());
}

TEST_CASE("inner factors against direct quadrature") {
  const std::vector<std::pair<const Row*, std::vector<double>>> cases{
      {&kTable1, {-3.0, -0.7}}, {&kTable2, {-3.0, -0.7, 0.0, 0.4}}, {&kTable4, {-3.0, -0.7, 0.0, 1.2}}};
  for (const auto& [r, nodes] : cases) {
    for (double h3 : nodes) {
      const auto f = inner_factors(h3, r->pq);
      const auto [lu, ld] = inner_by_quadrature(h3, r->pq);
      CHECK(std::fabs(f.log_f_zu - lu) <= 1e-10 * std::max(1.0, std::fabs(lu)));
      CHECK(std::fabs(f.log_f_zd - ld) <= 1e-10 * std::max(1.0, std::fabs(ld)));
      CHECK(std::isfinite(f.log_f_zt));
    }
  }
  CHECK(inner_factors(0.0, kTable2.pq).f_zt() > 0.0);
  // at the AGS row the mirror branch underflows (log f_zd ~ -778) at h3 = 0
  CHECK_THROWS_AS(inner_factors(0.0, kTable1.pq), EvaluationError);
}

TEST_CASE("inner factors overflow guard") {
  CHECK_THROWS_AS(inner_factors(5.0, {0.0, 0.5, 1e3, 1e3, 0.0}), EvaluationError);
}

TEST_CASE("small-c2 expansion of the inner factor") {
  // at q2 = 0 the exponent is c2 X with X = nu + |h - nu|, so
  // (1/c2) log f_zt = E X + c2 Var X / 2 + O(c2^2)
  const double c2 = 1e-4;
  for (double nu : {-2.0, -0.5, 0.0, 0.8}) {
    const auto f = inner_factors(0.3, {0.0, 0.0, c2, 1.0, nu});
    const double ma = oracle::mean_abs(nu);
    const double ex = nu + ma, var = 1.0 + nu * nu - ma * ma;
    CHECK(std::fabs(f.log_f_zt / c2 - (ex + 0.5 * c2 * var)) <= 1e-7);
  }
}

TEST_CASE("psi at the printed AGS row") {
  // stationarity gives psi = -(1 - 2 delta) / nu
  CHECK(std::fabs(psi_rd_l2(kTable1.pq, kTable1.alpha, kTable1.delta) - 0.45483) <= 2e-3);
}

TEST_CASE("level embedding") {
  for (double d : {0.01, 0.05, 0.15, 0.3, 0.5}) {
    for (double a : {0.02, 0.05, 0.1, 0.138, 0.2}) {
      const LiftingParams pq{0.0, 0.0, 1e-5, std::sqrt(a) / 2.0, level1::nu_hat_l1(d)};
      CHECK(std::fabs(psi_rd_l2(pq, a, d) - level1::xi_l1(d, a)) <= 1e-5);
    }
  }
}

TEST_CASE("gamma stationarity in the level-1 limit") {
  const double a = 0.12;
  auto g3 = [&](double g) { return grad_psi_l2({0.0, 1e-6, 1e-5, g, -1.0}, a, 0.1)[3]; };
  const auto r = solvers::find_root(g3, 0.05, 1.0);
  CHECK(std::fabs(r.value - std::sqrt(a) / 2.0) <= 1e-5);
}

TEST_CASE("nu derivative vanishes at the symmetric point") {
  const auto g = grad_psi_l2({0.0, 0.0, 0.7, 1.0, 0.0}, 0.05, 0.5);
  CHECK(std::fabs(g[4]) <= 1e-12);
  CHECK(std::isnan(g[1]));
}

TEST_CASE("analytic gradient against finite differences") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int points = 0;
  while (points < 24) {
    const double p2 = 0.05 + 0.85 * u(rng);
    const double q2 = p2 + (0.97 - p2) * (0.05 + 0.9 * u(rng));
    const double c2 = 0.1 + 6.0 * u(rng);
    const LiftingParams pq{p2, q2, c2, 0.5 * c2 * (1.0 - p2) + 0.05 + u(rng), -3.0 + 3.0 * u(rng)};
    const double a = 0.02 + 0.2 * u(rng), d = 0.01 + 0.49 * u(rng);
    const auto rule = rule_for(pq, 160);
    const auto g = grad_psi_l2(pq, a, d, rule);
    auto f = [&](std::span<const double> x) { return psi_rd_l2({x[0], x[1], x[2], x[3], x[4]}, a, d, rule); };
    const std::vector<double> x{pq.p2, pq.q2, pq.c2, pq.gamma_sq, pq.nu};
    const auto errs = solvers::fd_errors(f, g, x, 1e-6);
    for (int i = 0; i < 5; ++i) {
      INFO("component " << kParamNames[i]);
      CHECK(errs[i] <= 1e-6);
    }
    ++points;
  }
}

TEST_CASE("gradient is small at the printed AGS row") {
  // The printed row carries 4-6 digits; each entry may be off by half a unit
  // in its last digit. The gradient must vanish to 1e-3 up to the shift that
  // rounding alone can produce, estimated by moving each entry by that much.
  const auto& r = kTable1;
  const auto g = grad_psi_l2(r.pq, r.alpha, r.delta);
  const double half_unit[5] = {5e-6, 5e-6, 5e-5, 5e-5, 5e-5};
  std::array<double, 5> band{};
  for (int j = 0; j < 5; ++j) {
    LiftingParams q = r.pq;
    double* f[5] = {&q.p2, &q.q2, &q.c2, &q.gamma_sq, &q.nu};
    *f[j] += half_unit[j];
    const auto gj = grad_psi_l2(q, r.alpha, r.delta);
    for (int i = 0; i < 5; ++i) band[i] += std::fabs(gj[i] - g[i]);
  }
  for (int i = 0; i < 5; ++i) {
    INFO("component " << kParamNames[i] << " band " << band[i]);
    CHECK(std::fabs(g[i]) <= 1e-3 + band[i]);
  }
  // and the solved point proper is stationary
  const auto s = solve_point_l2(r.alpha, r.delta, std::nullopt);
  for (double v : grad_psi_l2(s.params, r.alpha, r.delta)) CHECK(std::fabs(v) <= 1e-3);
}

TEST_CASE("closed-form relations") {
  CHECK(std::fabs(closed_form_q2(kTable1.pq, kTable1.alpha) - 0.99694) <= 5e-3);
  CHECK(closed_form_q2({0.0, 0.3, 1.0, 1.0, 0.0}, 0.1) == 0.0);

  CHECK(std::fabs(gamma_from_pq(0.4, 0.4, 0.1) - std::sqrt(0.1) / 2.0) <= 1e-15);
  CHECK(std::fabs(gamma_from_pq(kTable1.pq.p2, kTable1.pq.q2, kTable1.alpha) - 0.2153) <= 5e-4);
  CHECK(std::fabs(gamma_from_pq(kTable2.pq.p2, kTable2.pq.q2, kTable2.alpha) - 0.2309) <= 5e-4);

  CHECK(c2_from_pq(0.4, 0.4, 0.1) == 0.0);
  CHECK(std::fabs(c2_from_pq(kTable4.pq.p2, kTable4.pq.q2, kTable4.alpha) / 0.5308 - 1.0) <= 1e-2);
  // The printed p2, q2 carry five decimals and c2 ~ 1/(1 - q2) amplifies
  // that rounding; the printed c2 must lie within the resulting band.
  double lo = 1e300, hi = -1e300;
  for (double dp : {-5e-6, 5e-6}) {
    for (double dq : {-5e-6, 5e-6}) {
      const double c = c2_from_pq(kTable1.pq.p2 + dp, kTable1.pq.q2 + dq, kTable1.alpha);
      lo = std::min(lo, c);
      hi = std::max(hi, c);
    }
  }
  CHECK(lo <= 16.6192);
  CHECK(16.6192 <= hi);

  const auto full = complete_from_pq(0.9, 0.95, -1.0, 0.1);
  CHECK(full.c2 > 0.0);
  CHECK(std::fabs(closed_form_q2(full, 0.1) - 0.95) <= 1e-12);
}

TEST_CASE("stationary points at the printed rows") {
  for (const Row* r : {&kTable1, &kTable2, &kTable4}) {
    const auto s = solve_point_l2(r->alpha, r->delta, std::nullopt);
    REQUIRE(s.diagnostics.converged);
    REQUIRE_FALSE(s.collapsed);
    check_row(s, *r);
    check_closed_forms(s, r->alpha);
    CHECK(std::fabs(s.psi - psi_rd_l2(s.params, r->alpha, r->delta)) <= 1e-12);
  }
  CHECK_THROWS_AS(solve_stationary_l2(0.1, 0.1, {0.9, 0.9, 0.0, 0.0, -1.0}), DomainError);
}

TEST_CASE("quadrature doubling at the printed rows") {
  for (const Row* r : {&kTable1, &kTable2, &kTable4}) {
    const auto s = solve_point_l2(r->alpha, r->delta, std::nullopt);
    const double a = psi_rd_l2(s.params, r->alpha, r->delta, 80);
    const double b = psi_rd_l2(s.params, r->alpha, r->delta, 160);
    CHECK(std::fabs(a - b) <= 1e-9);
  }
}

TEST_CASE("xi1_l2") {
  CHECK(std::fabs(xi1_l2(1e-5, 0.1) + 1.1) <= 1e-4);
  for (double d : {0.005, 0.02, 0.04, 0.08}) CHECK(std::fabs(xi1_l2(d, 0.10) - level1::xi1_l1(d, 0.10)) <= 1e-3);
  CHECK(std::fabs(xi1_l2(0.0347, 0.12979) + 1.12979) <= 1e-4);
}

TEST_CASE("AGS level 2") {
  const auto c = capacity_ags_l2();
  CHECK(std::fabs(c.alpha_c - 0.138186) <= 2e-4);
  CHECK(std::fabs(c.delta_hat - 0.0167) <= 5e-3);
  check_row(c.solution, kTable1);
  check_closed_forms(c.solution, c.alpha_c);
  CHECK(c.alpha_c > level1::capacity_ags_l1().alpha_c);
}

TEST_CASE("NLT level 2") {
  const auto c = capacity_nlt_l2();
  CHECK(std::fabs(c.alpha_c - 0.12979) <= 2e-4);
  CHECK(std::fabs(c.delta_hat - 0.0347) <= 5e-3);
  check_row(c.solution, kTable2);
  check_closed_forms(c.solution, c.alpha_c);
  CHECK(std::fabs(xi1_l2(c.delta_hat, c.alpha_c) + 1.0 + c.alpha_c) <= 1e-4);
}

TEST_CASE("GLM level 2") {
  const auto c = capacity_glm_l2();
  CHECK(std::fabs(c.alpha_c - 0.056141) <= 5e-4);
  check_row(c.solution, kTable4);
  check_closed_forms(c.solution, c.alpha_c);
  REQUIRE(c.min_branch.has_value());
  CHECK(c.min_branch->collapsed);
  CHECK(std::fabs(c.min_branch->delta_hat - 1.23e-5) <= 1e-6);
  CHECK(std::fabs(c.min_branch->params.nu + 4.2184) <= 5e-3);
  CHECK(c.alpha_c < capacity_nlt_l2().alpha_c);
}

TEST_CASE("curve_l2") {
  const std::vector<double> ds{0.0, 0.01, 0.0347, 0.06};
  const auto c = curve_l2(0.12979, ds);
  REQUIRE(c.size() == ds.size());
  CHECK(c[0].xi_tot == 0.0);
  CHECK(std::fabs(c[0].xi - std::sqrt(0.12979)) <= 1e-15);
  for (const auto& p : c) CHECK(p.ok);
  CHECK(std::fabs(c[2].xi_tot) <= 1e-4);
}
