#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hopcap::solvers {

struct SolverConfig {
  double abs_tol = 1e-10;  ///< residual tolerance
  double rel_tol = 1e-12;  ///< step / bracket tolerance
  int max_iter = 200;
  double damping = 0.5;    ///< backtracking factor in (0, 1]

  void validate() const;
};

template <class T>
struct SolveReport {
  T value{};
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string message;
};

using ScalarFn = std::function<double(double)>;
using Vector = std::vector<double>;
using VectorFn = std::function<Vector(std::span<const double>)>;

/// Thrown by find_root when f(lo) and f(hi) have the same sign.
class NoSignChangeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Brent's method: bisection safeguarded inverse quadratic interpolation.
/// The returned root always lies inside [lo, hi].
SolveReport<double> find_root(const ScalarFn& f, double lo, double hi, const SolverConfig& cfg = {});

/// Golden-section search for the maximum of a unimodal f on [lo, hi].
/// `value` is the argmax, `max_value` the maximum, `residual` the final
/// bracket width. f is never evaluated outside [lo, hi].
struct MaxReport : SolveReport<double> {
  double max_value = 0.0;
};
MaxReport maximize_scalar(const ScalarFn& f, double lo, double hi, const SolverConfig& cfg = {});

/// Golden-section from `starts` equal sub-brackets of [lo, hi]; returns the best.
MaxReport maximize_multistart(const ScalarFn& f, double lo, double hi, int starts = 8,
                              const SolverConfig& cfg = {});

/// Damped Newton on F(x) = 0 with a central-difference Jacobian. Steps are
/// shortened by cfg.damping until max|F| decreases; a non-finite F marks an
/// inadmissible point and is treated as a failed step. On stall a
/// secant-style (Broyden) update of the last Jacobian is tried before giving up.
/// Divergence (max|F| grows 10x over 20 iterations) ends the solve with the
/// last iterate and converged = false.
SolveReport<Vector> solve_damped(const VectorFn& residual, Vector init, const SolverConfig& cfg = {});

/// Max over coordinates of |fd_i - grad_i| / max(1, |grad_i|), where fd is the
/// central difference with step `step * max(1, |x_i|)`.
double fd_check(const std::function<double(std::span<const double>)>& f,
                const std::function<Vector(std::span<const double>)>& grad, std::span<const double> point,
                double step);

/// Per-coordinate variant of fd_check, same error measure.
Vector fd_errors(const std::function<double(std::span<const double>)>& f, std::span<const double> analytic,
                 std::span<const double> point, double step);

}  // namespace hopcap::solvers
