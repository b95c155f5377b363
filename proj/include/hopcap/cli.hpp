#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hopcap/level1.hpp"
#include "hopcap/level2.hpp"
#include "hopcap/simulator.hpp"

namespace hopcap::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitNoConvergence = 2;
inline constexpr int kExitVerifyFailed = 3;

std::string version();

struct RunManifest {
  std::string command;
  nlohmann::json parameters;
  std::string version;
  std::string timestamp;  ///< UTC, ISO 8601
  std::uint64_t seed = 0;

  [[nodiscard]] nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

/// What a command produced. `document` is the JSON result (if any), `text`
/// the CSV or report body (if any); warnings go to the diagnostic stream.
struct CommandResult {
  int exit_code = kExitOk;
  nlohmann::json document;
  std::string text;
  std::string per_trial_csv;
  std::vector<std::string> warnings;
  RunManifest manifest;
};

struct CapacityArgs {
  BasinKind basin = BasinKind::ags;
  int level = 1;
  int quad_order = specfun::kDefaultQuadOrder;
  double tol = 0.0;  ///< 0 selects 1e-10 on level 1 and 1e-8 on level 2
};

struct CurveArgs {
  double alpha = 0.0;
  int level = 1;
  double delta_min = 0.0;
  double delta_max = 0.5;
  int steps = 100;
  int quad_order = specfun::kDefaultQuadOrder;
};

struct SolveArgs {
  double alpha = 0.0;
  double delta = 0.0;
  std::optional<double> p2;
  std::optional<double> q2;
  std::optional<double> nu;
  int quad_order = specfun::kDefaultQuadOrder;
  double tol = 1e-8;
};

struct SimulateArgs {
  sim::ExperimentConfig experiment;
  bool per_trial = false;
};

/// Hook applied to every analytic gradient the verify suite evaluates
/// (used to check that the suite catches a broken derivative).
using GradientMutator = std::function<void(level2::Gradient&)>;

struct VerifyArgs {
  int quad_order = specfun::kDefaultQuadOrder;
  std::uint64_t seed = 1;
  GradientMutator mutator;
};

CommandResult cmd_capacity(const CapacityArgs& args);
CommandResult cmd_curve(const CurveArgs& args);
CommandResult cmd_solve(const SolveArgs& args);
CommandResult cmd_simulate(const SimulateArgs& args);
CommandResult cmd_verify(const VerifyArgs& args);

/// Re-runs the command recorded in a manifest.
CommandResult replay(const RunManifest& manifest);

/// Decimal notation with 12 significant digits, no exponent.
std::string format_decimal(double v);

/// Parses argv and runs the chosen subcommand, writing results to `out` and
/// diagnostics to `err`. Returns the exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hopcap::cli
