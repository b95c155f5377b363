#include "hopcap/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/core.h>

namespace hopcap::solvers {
namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) {
    if (!std::isfinite(x)) return std::numeric_limits<double>::infinity();
    m = std::max(m, std::abs(x));
  }
  return m;
}

// Gaussian elimination with partial pivoting; false when singular.
bool solve_linear(std::vector<Vector> a, Vector b, Vector& x) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    }
    if (!(std::abs(a[piv][col]) > 1e-300)) return false;
    std::swap(a[piv], a[col]);
    std::swap(b[piv], b[col]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[r][col] / a[col][col];
      for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  x.assign(n, 0.0);
  for (std::size_t i = n; i-- > 0;) {
    double acc = b[i];
    for (std::size_t c = i + 1; c < n; ++c) acc -= a[i][c] * x[c];
    x[i] = acc / a[i][i];
  }
  for (double v : x) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::vector<Vector> fd_jacobian(const VectorFn& residual, const Vector& x, const Vector& fx) {
  const std::size_t n = x.size();
  std::vector<Vector> jac(fx.size(), Vector(n, 0.0));
  Vector xp = x;
  for (std::size_t j = 0; j < n; ++j) {
    const double h = 1e-6 * std::max(1.0, std::abs(x[j]));
    xp[j] = x[j] + h;
    const Vector fp = residual(xp);
    xp[j] = x[j] - h;
    const Vector fm = residual(xp);
    xp[j] = x[j];
    const bool ok_p = max_abs(fp) < std::numeric_limits<double>::infinity();
    const bool ok_m = max_abs(fm) < std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < fx.size(); ++i) {
      if (ok_p && ok_m) {
        jac[i][j] = (fp[i] - fm[i]) / (2.0 * h);
      } else if (ok_p) {
        jac[i][j] = (fp[i] - fx[i]) / h;
      } else if (ok_m) {
        jac[i][j] = (fx[i] - fm[i]) / h;
      } else {
        jac[i][j] = std::numeric_limits<double>::quiet_NaN();
      }
    }
  }
  return jac;
}

}  // namespace

void SolverConfig::validate() const {
  if (!(abs_tol > 0.0) || !(rel_tol > 0.0) || max_iter < 1 || !(damping > 0.0 && damping <= 1.0)) {
    throw std::invalid_argument(
        fmt::format("SolverConfig: need abs_tol > 0, rel_tol > 0, max_iter >= 1, damping in (0, 1]; got "
                    "{}, {}, {}, {}",
                    abs_tol, rel_tol, max_iter, damping));
  }
}

SolveReport<double> find_root(const ScalarFn& f, double lo, double hi, const SolverConfig& cfg) {
  cfg.validate();
  if (!(lo < hi)) throw std::invalid_argument(fmt::format("find_root: need lo < hi, got [{}, {}]", lo, hi));
  double a = lo, b = hi;
  double fa = f(a), fb = f(b);
  SolveReport<double> rep;
  if (fa == 0.0 || fb == 0.0) {
    rep.value = fa == 0.0 ? a : b;
    rep.converged = true;
    return rep;
  }
  if ((fa > 0.0) == (fb > 0.0) || !std::isfinite(fa) || !std::isfinite(fb)) {
    throw NoSignChangeError(
        fmt::format("find_root: no sign change on [{}, {}] (f = {}, {})", lo, hi, fa, fb));
  }
  double c = a, fc = fa, d = b - a, e = d;
  for (int it = 1; it <= cfg.max_iter; ++it) {
    if ((fb > 0.0) == (fc > 0.0)) {
      c = a;
      fc = fa;
      d = e = b - a;
    }
    if (std::abs(fc) < std::abs(fb)) {
      a = b;
      b = c;
      c = a;
      fa = fb;
      fb = fc;
      fc = fa;
    }
    const double tol = 2.0 * kEps * std::abs(b) + 0.5 * cfg.rel_tol * std::abs(b);
    const double m = 0.5 * (c - b);
    rep.iterations = it;
    if (std::abs(fb) <= cfg.abs_tol || std::abs(m) <= tol || fb == 0.0) {
      rep.value = b;
      rep.residual = std::abs(fb);
      rep.converged = true;
      return rep;
    }
    if (std::abs(e) >= tol && std::abs(fa) > std::abs(fb)) {
      double p, q;
      const double s = fb / fa;
      if (a == c) {
        p = 2.0 * m * s;
        q = 1.0 - s;
      } else {
        const double qa = fa / fc, r = fb / fc;
        p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
        q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
      }
      if (p > 0.0) q = -q; else p = -p;
      if (2.0 * p < std::min(3.0 * m * q - std::abs(tol * q), std::abs(e * q))) {
        e = d;
        d = p / q;
      } else {
        d = m;
        e = m;
      }
    } else {
      d = m;
      e = m;
    }
    a = b;
    fa = fb;
    b += std::abs(d) > tol ? d : std::copysign(tol, m);
    b = std::clamp(b, lo, hi);
    fb = f(b);
  }
  rep.value = b;
  rep.residual = std::abs(fb);
  rep.converged = false;
  rep.message = "find_root: max_iter exhausted";
  return rep;
}

MaxReport maximize_scalar(const ScalarFn& f, double lo, double hi, const SolverConfig& cfg) {
  cfg.validate();
  if (!(lo < hi)) throw std::invalid_argument(fmt::format("maximize_scalar: need lo < hi, got [{}, {}]", lo, hi));
  const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double x1 = b - ratio * (b - a), x2 = a + ratio * (b - a);
  double f1 = f(x1), f2 = f(x2);
  MaxReport rep;
  int it = 0;
  auto done = [&] { return (b - a) <= cfg.rel_tol * std::max(1e-300, 0.5 * (std::abs(a) + std::abs(b))); };
  while (!done() && it < cfg.max_iter) {
    ++it;
    if (f1 >= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - ratio * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + ratio * (b - a);
      f2 = f(x2);
    }
  }
  // the endpoints themselves are candidates for monotone f
  rep.value = f1 >= f2 ? x1 : x2;
  rep.max_value = std::max(f1, f2);
  rep.residual = b - a;
  rep.iterations = it;
  rep.converged = done();
  if (!rep.converged) rep.message = "maximize_scalar: max_iter exhausted";
  return rep;
}

MaxReport maximize_multistart(const ScalarFn& f, double lo, double hi, int starts, const SolverConfig& cfg) {
  if (starts < 1) throw std::invalid_argument("maximize_multistart: starts must be >= 1");
  MaxReport best;
  bool have = false;
  const double w = (hi - lo) / starts;
  for (int k = 0; k < starts; ++k) {
    const double a = lo + w * k;
    const double b = k + 1 == starts ? hi : a + w;
    MaxReport r = maximize_scalar(f, a, b, cfg);
    if (!have || r.max_value > best.max_value) {
      const int total = best.iterations + r.iterations;
      best = r;
      best.iterations = total;
      have = true;
    } else {
      best.iterations += r.iterations;
    }
  }
  return best;
}

SolveReport<Vector> solve_damped(const VectorFn& residual, Vector init, const SolverConfig& cfg) {
  cfg.validate();
  SolveReport<Vector> rep;
  Vector x = std::move(init);
  Vector fx = residual(x);
  double norm = max_abs(fx);
  if (!std::isfinite(norm)) {
    rep.value = x;
    rep.residual = norm;
    rep.message = "solve_damped: initial point inadmissible";
    return rep;
  }
  std::vector<double> history{norm};
  std::vector<Vector> secant;  // Broyden-updated Jacobian from the previous step

  // Backtracking line search along the Newton direction of `jac`.
  auto try_step = [&](const std::vector<Vector>& jac) {
    Vector neg(fx.size());
    for (std::size_t i = 0; i < fx.size(); ++i) neg[i] = -fx[i];
    Vector dx;
    if (!solve_linear(jac, neg, dx)) return false;
    double lambda = 1.0;
    for (int bt = 0; bt < 40; ++bt) {
      Vector xn(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) xn[i] = x[i] + lambda * dx[i];
      Vector fn = residual(xn);
      const double nn = max_abs(fn);
      if (nn < norm) {
        secant = jac;
        double ss = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) ss += (xn[i] - x[i]) * (xn[i] - x[i]);
        if (ss > 0.0) {
          for (std::size_t i = 0; i < fx.size(); ++i) {
            double js = 0.0;
            for (std::size_t j = 0; j < x.size(); ++j) js += jac[i][j] * (xn[j] - x[j]);
            const double yi = fn[i] - fx[i] - js;
            for (std::size_t j = 0; j < x.size(); ++j) secant[i][j] += yi * (xn[j] - x[j]) / ss;
          }
        }
        x = std::move(xn);
        fx = std::move(fn);
        norm = nn;
        return true;
      }
      lambda *= cfg.damping;
    }
    return false;
  };

  for (int it = 1; it <= cfg.max_iter && norm > cfg.abs_tol; ++it) {
    rep.iterations = it;
    const auto jac = fd_jacobian(residual, x, fx);
    if (!try_step(jac) && (secant.empty() || !try_step(secant))) {
      rep.message = "solve_damped: line search stalled";
      break;
    }
    history.push_back(norm);
    if (history.size() > 20 && norm > 10.0 * history[history.size() - 21]) {
      rep.message = "solve_damped: divergence detected";
      break;
    }
  }
  rep.value = x;
  rep.residual = norm;
  rep.converged = norm <= cfg.abs_tol;
  if (!rep.converged && rep.message.empty()) rep.message = "solve_damped: max_iter exhausted";
  return rep;
}

Vector fd_errors(const std::function<double(std::span<const double>)>& f, std::span<const double> analytic,
                 std::span<const double> point, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("fd_check: step must be positive");
  Vector x(point.begin(), point.end());
  Vector errs(x.size(), 0.0);
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double h = step * std::max(1.0, std::abs(point[j]));
    x[j] = point[j] + h;
    const double fp = f(x);
    x[j] = point[j] - h;
    const double fm = f(x);
    x[j] = point[j];
    const double fd = (fp - fm) / (2.0 * h);
    errs[j] = std::abs(fd - analytic[j]) / std::max(1.0, std::abs(analytic[j]));
  }
  return errs;
}

double fd_check(const std::function<double(std::span<const double>)>& f,
                const std::function<Vector(std::span<const double>)>& grad, std::span<const double> point,
                double step) {
  const Vector g = grad(point);
  const Vector errs = fd_errors(f, g, point, step);
  double worst = 0.0;
  for (double e : errs) worst = std::max(worst, e);
  return worst;
}

}  // namespace hopcap::solvers
