#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

namespace hopcap {

/// Argument outside the mathematical domain of a function.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A numerical evaluation produced a non-finite or out-of-range value.
class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace specfun {

double erf_fn(double x);
double erfc_fn(double x);

/// Scaled complementary error function exp(x^2) erfc(x). Finite for x > -26.
double erfcx_fn(double x);

/// Inverse error function on (-1, 1). Throws DomainError for |y| >= 1.
double erfinv_fn(double y);

/// Inverse complementary error function on (0, 2). Accurate in the far tail,
/// where erfinv(1 - z) would lose digits to the subtraction.
double erfcinv_fn(double z);

/// Standard normal density and distribution.
double normal_pdf(double x);
double normal_cdf(double x);

/// log Phi(x), accurate for large negative x.
double log_normal_cdf(double x);

/// Inverse Mills ratio phi(x) / Phi(x), accurate for large negative x.
double inverse_mills(double x);

/// log(exp(a) + exp(b)) without overflow.
double log_add_exp(double a, double b);

/// Node/weight set realizing expectations over a standard normal variate.
class QuadratureRule {
 public:
  QuadratureRule(std::vector<double> nodes, std::vector<double> weights);

  [[nodiscard]] int order() const { return static_cast<int>(nodes_.size()); }
  [[nodiscard]] std::span<const double> nodes() const { return nodes_; }
  [[nodiscard]] std::span<const double> weights() const { return weights_; }

 private:
  std::vector<double> nodes_;
  std::vector<double> weights_;
};

inline constexpr int kMaxRuleOrder = 512;
inline constexpr int kDefaultQuadOrder = 80;

/// Gauss-Hermite rule for the standard normal weight (probabilists' form).
/// Requires 2 <= order <= 512.
QuadratureRule make_rule(int order);

/// Trapezoid rule in t under h = center + scale * sinh(t), truncated to
/// |h| <= 9. Concentrates nodes where an integrand changes over a length
/// `scale` near `center`; converges geometrically for analytic integrands.
QuadratureRule make_focused_rule(int order, double center, double scale);

/// sum_i w_i f(x_i). Throws EvaluationError if f is non-finite at a node.
double expect(const std::function<double(double)>& f, const QuadratureRule& rule);

}  // namespace specfun
}  // namespace hopcap
