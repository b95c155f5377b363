#include "hopcap/specfun.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Eigenvalues>
#include <fmt/core.h>

namespace hopcap::specfun {
namespace {

constexpr double kSqrtPi = 1.7724538509055160273;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
constexpr double kSqrt2 = std::numbers::sqrt2;
constexpr double kTruncation = 9.0;

// Giles' single-precision approximation of erfinv, written in terms of
// z = 1 - y so that the tail keeps its digits. Good to ~1e-7 relative,
// enough for a Halley polish to finish the job.
double erfinv_seed(double y, double z) {
  double w = -std::log(z * (2.0 - z));
  double p;
  if (w < 5.0) {
    w -= 2.5;
    p = 2.81022636e-08;
    p = 3.43273939e-07 + p * w;
    p = -3.5233877e-06 + p * w;
    p = -4.39150654e-06 + p * w;
    p = 0.00021858087 + p * w;
    p = -0.00125372503 + p * w;
    p = -0.00417768164 + p * w;
    p = 0.246640727 + p * w;
    p = 1.50140941 + p * w;
  } else {
    w = std::sqrt(w) - 3.0;
    p = -0.000200214257;
    p = 0.000100950558 + p * w;
    p = 0.00134934322 + p * w;
    p = -0.00367342844 + p * w;
    p = 0.00573950773 + p * w;
    p = -0.0076224613 + p * w;
    p = 0.00943887047 + p * w;
    p = 1.00167406 + p * w;
    p = 2.83297682 + p * w;
  }
  return p * y;
}

// Seed for erfc(x) = z with z tiny: solve x^2 = -log(z x sqrt(pi)).
double erfcinv_tail_seed(double z) {
  double x = std::sqrt(-std::log(z));
  for (int i = 0; i < 3; ++i) x = std::sqrt(-std::log(z * x * kSqrtPi));
  return x;
}

// Halley polish. For both erf and erfc, f''/f' = -2x, so the update is
// x <- x - u / (1 + x u) with u = f / f'.
template <class Residual>
double halley_polish(double x, Residual residual_over_slope) {
  for (int it = 0; it < 8; ++it) {
    const double u = residual_over_slope(x);
    const double step = u / (1.0 + x * u);
    x -= step;
    if (std::abs(step) <= 4e-17 * std::max(1.0, std::abs(x))) break;
  }
  return x;
}

}  // namespace

double erf_fn(double x) { return std::erf(x); }

double erfc_fn(double x) { return std::erfc(x); }

double erfcx_fn(double x) {
  if (x < 6.0) {
    if (x < -26.0) return std::numeric_limits<double>::infinity();
    return std::exp(x * x) * std::erfc(x);
  }
  // Continued fraction erfcx(x) = (1/sqrt(pi)) / (x + (1/2)/(x + 1/(x + (3/2)/(x + ...)))),
  // evaluated bottom-up; 60 levels is ample for x >= 6.
  double frac = x;
  for (int k = 60; k >= 1; --k) frac = x + (0.5 * k) / frac;
  return 1.0 / (kSqrtPi * frac);
}

double erfcinv_fn(double z) {
  if (!(z > 0.0 && z < 2.0)) {
    throw DomainError(fmt::format("erfcinv: argument {} outside (0, 2)", z));
  }
  if (z > 1.0) return -erfcinv_fn(2.0 - z);
  if (z == 1.0) return 0.0;
  double x = z < 1e-8 ? erfcinv_tail_seed(z) : erfinv_seed(1.0 - z, z);
  return halley_polish(x, [z](double t) {
    // (erfc(t) - z) / (-(2/sqrt(pi)) exp(-t^2))
    return -(std::erfc(t) - z) * std::exp(t * t) * (kSqrtPi / 2.0);
  });
}

double erfinv_fn(double y) {
  if (!(y > -1.0 && y < 1.0)) {
    throw DomainError(fmt::format("erfinv: argument {} outside (-1, 1)", y));
  }
  if (y == 0.0) return 0.0;
  // Away from the centre, 1 - |y| is exact and the erfc form keeps the tail digits.
  if (std::abs(y) > 0.5) return std::copysign(erfcinv_fn(1.0 - std::abs(y)), y);
  const double x = erfinv_seed(y, 1.0 - y);
  return halley_polish(x, [y](double t) {
    return (std::erf(t) - y) * std::exp(t * t) * (kSqrtPi / 2.0);
  });
}

double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / kSqrt2); }

double log_normal_cdf(double x) {
  if (x > 5.0) return std::log1p(-0.5 * std::erfc(x / kSqrt2));
  if (x > -5.0) return std::log(0.5 * std::erfc(-x / kSqrt2));
  return std::log(0.5 * erfcx_fn(-x / kSqrt2)) - 0.5 * x * x;
}

double inverse_mills(double x) {
  if (x > -5.0) return normal_pdf(x) / normal_cdf(x);
  // phi(x) / Phi(x) = sqrt(2/pi) / erfcx(-x / sqrt(2))
  return (2.0 * kInvSqrt2Pi) / erfcx_fn(-x / kSqrt2);
}

double log_add_exp(double a, double b) {
  const double hi = std::max(a, b);
  if (hi == -std::numeric_limits<double>::infinity()) return hi;
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

QuadratureRule::QuadratureRule(std::vector<double> nodes, std::vector<double> weights)
    : nodes_(std::move(nodes)), weights_(std::move(weights)) {
  if (nodes_.size() != weights_.size() || nodes_.empty()) {
    throw std::invalid_argument("QuadratureRule: nodes and weights must be non-empty and equal length");
  }
}

QuadratureRule make_rule(int order) {
  if (order < 2 || order > kMaxRuleOrder) {
    throw DomainError(fmt::format("make_rule: order {} outside [2, {}]", order, kMaxRuleOrder));
  }
  // Nodes start as eigenvalues of the Jacobi matrix of the Hermite
  // polynomials (weight exp(-t^2)); Newton on the orthonormal recurrence
  // polishes them and yields the weights. h = sqrt(2) t for the standard normal.
  const int n = order;
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd sub(n - 1);
  for (int k = 1; k < n; ++k) sub[k - 1] = std::sqrt(0.5 * k);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig;
  eig.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw EvaluationError(fmt::format("make_rule: eigensolver failed at order {}", n));

  const double pim4 = 0.7511255444649425;  // pi^(-1/4)
  std::vector<double> t(n), w(n);
  for (int i = 0; i < n; ++i) {
    double z = eig.eigenvalues()[i];
    double pp = 0.0;
    for (int it = 0; it < 10; ++it) {
      double p1 = pim4;
      double p2 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = z * std::sqrt(2.0 / (j + 1)) * p2 - std::sqrt(static_cast<double>(j) / (j + 1)) * p3;
      }
      pp = std::sqrt(2.0 * n) * p2;
      const double step = p1 / pp;
      z -= step;
      if (std::abs(step) <= 1e-15 * std::max(1.0, std::abs(z))) break;
    }
    t[i] = z;
    w[i] = 2.0 / (pp * pp);
  }
  // exact symmetry
  for (int i = 0; i < n / 2; ++i) {
    const double z = 0.5 * (t[n - 1 - i] - t[i]);
    const double wi = 0.5 * (w[i] + w[n - 1 - i]);
    t[i] = -z;
    t[n - 1 - i] = z;
    w[i] = w[n - 1 - i] = wi;
  }
  if (n % 2 == 1) t[n / 2] = 0.0;
  double total = 0.0;
  for (double wi : w) total += wi;
  std::vector<double> nodes(n), weights(n);
  for (int i = 0; i < n; ++i) {
    nodes[i] = kSqrt2 * t[i];
    weights[i] = w[i] / total;
  }
  return QuadratureRule(std::move(nodes), std::move(weights));
}

QuadratureRule make_focused_rule(int order, double center, double scale) {
  if (order < 2 || order > 4096) {
    throw DomainError(fmt::format("make_focused_rule: order {} outside [2, 4096]", order));
  }
  if (!(scale > 0.0) || !std::isfinite(center)) {
    throw DomainError("make_focused_rule: scale must be positive and center finite");
  }
  center = std::clamp(center, -8.0, 8.0);
  const double t_lo = std::asinh((-kTruncation - center) / scale);
  const double t_hi = std::asinh((kTruncation - center) / scale);
  const double dt = (t_hi - t_lo) / (order - 1);
  std::vector<double> nodes(order), weights(order);
  for (int i = 0; i < order; ++i) {
    const double t = t_lo + dt * i;
    const double h = center + scale * std::sinh(t);
    nodes[i] = h;
    weights[i] = normal_pdf(h) * scale * std::cosh(t) * dt;
  }
  weights.front() *= 0.5;
  weights.back() *= 0.5;
  return QuadratureRule(std::move(nodes), std::move(weights));
}

double expect(const std::function<double(double)>& f, const QuadratureRule& rule) {
  const auto nodes = rule.nodes();
  const auto weights = rule.weights();
  double acc = 0.0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const double v = f(nodes[i]);
    if (!std::isfinite(v)) {
      throw EvaluationError(fmt::format("expect: integrand non-finite at node {}", nodes[i]));
    }
    acc += weights[i] * v;
  }
  return acc;
}

}  // namespace hopcap::specfun
