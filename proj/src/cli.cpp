#include "hopcap/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/core.h>

#ifndef HOPCAP_VERSION
#define HOPCAP_VERSION "0.0.0"
#endif

namespace hopcap::cli {

using nlohmann::json;

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

RunManifest make_manifest(std::string command, json parameters, std::uint64_t seed = 0) {
  return {std::move(command), std::move(parameters), version(), utc_now(), seed};
}

json params_json(const level2::LiftingParams& p) {
  return {{"p2", p.p2}, {"q2", p.q2}, {"c2", p.c2}, {"gamma_sq", p.gamma_sq}, {"nu", p.nu}};
}

json residuals_json(const level2::Gradient& g) {
  json r = json::object();
  for (std::size_t i = 0; i < g.size(); ++i) r[level2::kParamNames[i]] = g[i];
  return r;
}

json level2_solution_json(const level2::Level2Solution& s) {
  return {{"alpha", s.alpha_c},
          {"delta", s.delta_hat},
          {"params", params_json(s.params)},
          {"residuals", residuals_json(s.residuals)},
          {"psi", s.psi},
          {"collapsed", s.collapsed},
          {"converged", s.diagnostics.converged},
          {"iterations", s.diagnostics.iterations}};
}

// Uniform double in [lo, hi) from raw 64-bit draws.
double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

struct Check {
  std::string name;
  double value;
  double tol;
  int points = 1;  ///< evaluation points behind `value`
  [[nodiscard]] bool pass() const { return std::isfinite(value) && value <= tol; }
};

}  // namespace

std::string version() { return HOPCAP_VERSION; }

json RunManifest::to_json() const {
  return {{"command", command}, {"parameters", parameters}, {"version", version}, {"timestamp", timestamp}, {"seed", seed}};
}

RunManifest RunManifest::from_json(const json& j) {
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.parameters = j.at("parameters");
  m.version = j.value("version", "");
  m.timestamp = j.value("timestamp", "");
  m.seed = j.value("seed", std::uint64_t{0});
  return m;
}

std::string format_decimal(double v) {
  if (!std::isfinite(v)) return "";
  if (v == 0.0) return "0";
  // the exponent after rounding to 12 significant digits fixes the decimals
  const std::string sci = fmt::format("{:.11e}", v);
  const int exp10 = std::stoi(sci.substr(sci.find('e') + 1));
  return fmt::format("{:.{}f}", v, std::max(0, 11 - exp10));
}

CommandResult cmd_capacity(const CapacityArgs& args) {
  if (args.level != 1 && args.level != 2) throw std::invalid_argument(fmt::format("level must be 1 or 2, got {}", args.level));
  if (args.tol < 0.0) throw std::invalid_argument("tol must be positive");
  CommandResult res;
  const double tol = args.tol > 0.0 ? args.tol : (args.level == 1 ? 1e-10 : 1e-8);
  res.manifest = make_manifest("capacity", {{"basin", to_string(args.basin)},
                                            {"level", args.level},
                                            {"quad_order", args.quad_order},
                                            {"tol", tol}});
  json doc{{"basin", to_string(args.basin)}, {"level", args.level}, {"quad_order", args.quad_order}};
  bool converged = false;
  if (args.level == 1) {
    solvers::SolverConfig cfg;
    cfg.abs_tol = tol;
    const auto s = level1::capacity_l1(args.basin, cfg);
    converged = s.diagnostics.converged;
    doc["alpha_c"] = s.alpha_c;
    doc["delta_hat"] = s.delta_hat;
    // level-1 convention: p2 = q2 = 0 and c2 -> 0
    doc["params"] = params_json({0.0, 0.0, 0.0, s.gamma_sq_hat, s.nu_hat});
    doc["residuals"] = {{"delta_equation", s.diagnostics.residual}};
    doc["iterations"] = s.diagnostics.iterations;
    doc["alpha_check"] = s.alpha_check;
    if (!s.diagnostics.message.empty()) doc["message"] = s.diagnostics.message;
  } else {
    level2::Level2Options opt;
    opt.quad_order = args.quad_order;
    opt.solver.abs_tol = tol;
    level2::Level2Capacity cap;
    try {
      cap = level2::capacity_l2(args.basin, opt);
    } catch (const solvers::NoSignChangeError& e) {
      doc["converged"] = false;
      doc["message"] = e.what();
      doc["manifest"] = res.manifest.to_json();
      res.document = std::move(doc);
      res.exit_code = kExitNoConvergence;
      return res;
    }
    const auto& s = cap.solution;
    converged = cap.outer.converged && s.diagnostics.converged;
    doc["alpha_c"] = cap.alpha_c;
    doc["delta_hat"] = cap.delta_hat;
    doc["params"] = params_json(s.params);
    doc["residuals"] = residuals_json(s.residuals);
    doc["iterations"] = cap.outer.iterations;
    doc["psi"] = s.psi;
    doc["collapsed"] = s.collapsed;
    if (args.basin == BasinKind::glm) {
      doc["branch_delta"] = s.delta_hat;
      if (cap.min_branch) doc["min_branch"] = level2_solution_json(*cap.min_branch);
    }
  }
  doc["converged"] = converged;
  doc["manifest"] = res.manifest.to_json();
  res.document = std::move(doc);
  res.exit_code = converged ? kExitOk : kExitNoConvergence;
  return res;
}

CommandResult cmd_curve(const CurveArgs& args) {
  if (args.level != 1 && args.level != 2) throw std::invalid_argument(fmt::format("level must be 1 or 2, got {}", args.level));
  if (!(args.alpha > 0.0)) throw std::invalid_argument("alpha must be > 0");
  if (!(args.delta_min >= 0.0 && args.delta_min < args.delta_max && args.delta_max <= 0.5)) {
    throw std::invalid_argument(fmt::format("need 0 <= delta_min < delta_max <= 0.5, got {}:{}", args.delta_min, args.delta_max));
  }
  if (args.steps < 1) throw std::invalid_argument("steps must be >= 1");
  CommandResult res;
  res.manifest = make_manifest("curve", {{"alpha", args.alpha},
                                         {"level", args.level},
                                         {"delta_min", args.delta_min},
                                         {"delta_max", args.delta_max},
                                         {"steps", args.steps},
                                         {"quad_order", args.quad_order}});
  std::vector<double> deltas(args.steps + 1);
  for (int i = 0; i <= args.steps; ++i) {
    deltas[i] = i == args.steps ? args.delta_max
                                : args.delta_min + (args.delta_max - args.delta_min) * i / args.steps;
  }
  std::vector<CurvePoint> pts;
  if (args.level == 1) {
    pts = level1::curve_l1(args.alpha, deltas);
  } else {
    level2::Level2Options opt;
    opt.quad_order = args.quad_order;
    pts = level2::curve_l2(args.alpha, deltas, opt);
  }
  std::string csv = "delta,xi,xi1,xi_tot\n";
  for (const auto& p : pts) {
    if (!p.ok) {
      res.warnings.push_back(fmt::format("level-2 solve failed at delta = {}", p.delta));
      csv += format_decimal(p.delta) + ",,,\n";
      continue;
    }
    csv += fmt::format("{},{},{},{}\n", format_decimal(p.delta), format_decimal(p.xi), format_decimal(p.xi1),
                       format_decimal(p.xi_tot));
  }
  res.text = std::move(csv);
  res.document = res.manifest.to_json();
  return res;
}

CommandResult cmd_solve(const SolveArgs& args) {
  if (!(args.alpha > 0.0)) throw std::invalid_argument("alpha must be > 0");
  if (!(args.delta > 0.0 && args.delta <= 0.5)) throw std::invalid_argument("delta must lie in (0, 0.5]");
  CommandResult res;
  json params{{"alpha", args.alpha}, {"delta", args.delta}, {"quad_order", args.quad_order}, {"tol", args.tol}};
  if (args.p2) params["p2"] = *args.p2;
  if (args.q2) params["q2"] = *args.q2;
  if (args.nu) params["nu"] = *args.nu;
  res.manifest = make_manifest("solve", params);
  level2::Level2Options opt;
  opt.quad_order = args.quad_order;
  opt.solver.abs_tol = args.tol;
  level2::Level2Solution s;
  if (args.p2 || args.q2 || args.nu) {
    if (!args.p2 || !args.q2) throw std::invalid_argument("an explicit init needs both --p2 and --q2");
    const double nu = args.nu ? *args.nu : level1::nu_hat_l1(args.delta);
    s = level2::solve_stationary_l2(args.alpha, args.delta, level2::LiftingParams{*args.p2, *args.q2, 0.0, 0.0, nu}, opt);
  } else {
    s = level2::solve_point_l2(args.alpha, args.delta, std::nullopt, opt);
  }
  json doc = level2_solution_json(s);
  doc["xi1"] = -(1.0 - 2.0 * args.delta) * (1.0 - 2.0 * args.delta) - s.psi * s.psi;
  doc["quad_order"] = args.quad_order;
  doc["manifest"] = res.manifest.to_json();
  res.document = std::move(doc);
  res.exit_code = s.diagnostics.converged ? kExitOk : kExitNoConvergence;
  return res;
}

CommandResult cmd_simulate(const SimulateArgs& args) {
  const auto& e = args.experiment;
  e.validate();
  CommandResult res;
  res.manifest = make_manifest("simulate",
                               {{"n", e.n},
                                {"alpha", e.alpha},
                                {"flip_frac", e.flip_frac},
                                {"trials", e.trials},
                                {"seed", e.seed},
                                {"delta_tol", e.delta_tol},
                                {"max_sweeps", e.dynamics.max_sweeps},
                                {"update_order", e.dynamics.update_order == sim::UpdateOrder::cyclic ? "cyclic" : "random"},
                                {"per_trial", args.per_trial}},
                               e.seed);
  const auto st = sim::retrieval_experiment(e);
  res.document = {{"n", e.n},
                  {"m", st.m},
                  {"alpha", e.alpha},
                  {"flip_frac", e.flip_frac},
                  {"trials", e.trials},
                  {"delta_tol", e.delta_tol},
                  {"mean_overlap", st.mean_overlap},
                  {"median_overlap", st.median_overlap},
                  {"retrieval_fraction", st.retrieval_fraction},
                  {"converged_fraction", st.converged_fraction},
                  {"mean_sweeps", st.mean_sweeps},
                  {"manifest", res.manifest.to_json()}};
  if (args.per_trial) {
    std::string csv = "trial,final_overlap,sweeps,converged,final_energy\n";
    for (std::size_t t = 0; t < st.trials.size(); ++t) {
      const auto& tr = st.trials[t];
      csv += fmt::format("{},{},{},{},{}\n", t, format_decimal(tr.final_overlap), tr.sweeps_used, tr.converged ? 1 : 0,
                         format_decimal(tr.final_energy));
    }
    res.per_trial_csv = std::move(csv);
  }
  return res;
}

CommandResult cmd_verify(const VerifyArgs& args) {
  if (args.quad_order < 2) throw std::invalid_argument("quad_order must be >= 2");
  CommandResult res;
  res.manifest = make_manifest("verify", {{"quad_order", args.quad_order}, {"seed", args.seed}}, args.seed);
  std::vector<Check> checks;
  std::mt19937_64 rng(args.seed);

  {
    double worst = 0.0;
    double prev = -std::numeric_limits<double>::infinity();
    bool monotone = true;
    for (int i = 0; i < 1000; ++i) {
      const double y = -1.0 + 1e-12 + (2.0 - 2e-12) * i / 999.0;
      const double x = specfun::erfinv_fn(y);
      worst = std::max(worst, std::abs(specfun::erf_fn(x) - y));
      monotone = monotone && x > prev;
      prev = x;
    }
    checks.push_back({"erf-roundtrip", worst, 1e-13});
    checks.push_back({"erfinv-monotone", monotone ? 0.0 : 1.0, 0.0});
  }

  // reference stationary points (Tables 1, 2 and the delta = 1/2 branch)
  struct Ref {
    double alpha, delta;
  };
  const Ref refs[] = {{0.138186, 0.0167}, {0.12979, 0.0347}, {0.056141, 0.5}};
  std::vector<level2::Level2Solution> sols;
  for (const auto& r : refs) sols.push_back(level2::solve_point_l2(r.alpha, r.delta, std::nullopt));

  {
    double worst = 0.0;
    for (const auto& s : sols) {
      const int k = args.quad_order;
      if (2 * k > 4096) throw std::invalid_argument("quad_order too large for the doubling check");
      const double a = level2::psi_rd_l2(s.params, s.alpha_c, s.delta_hat, k);
      const double b = level2::psi_rd_l2(s.params, s.alpha_c, s.delta_hat, 2 * k);
      worst = std::max(worst, std::abs(a - b));
    }
    checks.push_back({"quadrature-doubling", worst, 1e-9});
  }

  {
    std::array<double, 5> worst{};
    constexpr int kPoints = 24;
    for (int t = 0; t < kPoints; ++t) {
      level2::LiftingParams p;
      p.p2 = uniform(rng, 0.05, 0.95);
      p.q2 = uniform(rng, 0.05, 0.95);
      p.c2 = uniform(rng, 0.1, 10.0);
      p.gamma_sq = 0.5 * p.c2 * (1.0 - p.p2) * uniform(rng, 1.2, 3.0);
      p.nu = uniform(rng, -2.5, 0.5);
      const double alpha = uniform(rng, 0.02, 0.22);
      const double delta = uniform(rng, 0.01, 0.46);
      const auto rule = level2::rule_for(p, args.quad_order);
      auto unpack = [](std::span<const double> v) { return level2::LiftingParams{v[0], v[1], v[2], v[3], v[4]}; };
      auto f = [&](std::span<const double> v) { return level2::psi_rd_l2(unpack(v), alpha, delta, rule); };
      level2::Gradient g = level2::grad_psi_l2(p, alpha, delta, rule);
      if (args.mutator) args.mutator(g);
      const std::vector<double> x{p.p2, p.q2, p.c2, p.gamma_sq, p.nu};
      const auto err = solvers::fd_errors(f, g, x, 1e-6);
      for (int i = 0; i < 5; ++i) worst[i] = std::max(worst[i], err[i]);
    }
    for (int i = 0; i < 5; ++i) checks.push_back({std::string(level2::kParamNames[i]) + "-derivative", worst[i], 1e-6, kPoints});
  }

  {
    double worst = 0.0;
    for (const auto& s : sols) {
      const auto& p = s.params;
      worst = std::max(worst, std::abs(p.q2 - level2::closed_form_q2(p, s.alpha_c)));
      worst = std::max(worst, std::abs(p.gamma_sq - level2::gamma_from_pq(p.p2, p.q2, s.alpha_c)));
      worst = std::max(worst, std::abs(p.c2 - level2::c2_from_pq(p.p2, p.q2, s.alpha_c)));
      // the closed forms stand in for the p2 and gamma_sq equations
      level2::Gradient g = level2::grad_psi_l2(p, s.alpha_c, s.delta_hat, args.quad_order);
      if (args.mutator) args.mutator(g);
      worst = std::max({worst, std::abs(g[0]), std::abs(g[3])});
    }
    checks.push_back({"closed-form-loop", worst, 1e-6});
  }

  {
    double worst = 0.0;
    for (double delta : {0.01, 0.05, 0.1, 0.3, 0.49}) {
      for (double alpha : {0.03, 0.06, 0.1, 0.14, 0.2}) {
        const double nu = level1::nu_hat_l1(delta);
        const double gamma = std::sqrt(alpha) / 2.0;
        const level2::LiftingParams p{0.0, 0.0, 1e-5, gamma, nu};
        const double l2 = level2::psi_rd_l2(p, alpha, delta, args.quad_order);
        worst = std::max(worst, std::abs(l2 - level1::psi_rd_l1(nu, gamma, alpha, delta)));
      }
    }
    checks.push_back({"level-embedding", worst, 1e-5});
  }

  {
    const auto& s = sols[0];
    const double h = 1e-5;
    level2::Level2Options opt;
    opt.solver.abs_tol = 1e-11;
    const auto up = level2::solve_point_l2(s.alpha_c, s.delta_hat + h, s.params, opt);
    const auto dn = level2::solve_point_l2(s.alpha_c, s.delta_hat - h, s.params, opt);
    const double slope = (up.psi - dn.psi) / (2.0 * h);
    checks.push_back({"envelope-identity", std::abs(slope + 2.0 * s.params.nu), 1e-5});
  }

  {
    double worst1 = 0.0, worst2 = 0.0;
    const double h = 1e-6;
    for (double alpha : {0.05, 0.13}) {
      for (int i = 1; i <= 45; ++i) {
        const double d = 0.01 * i;
        const double fd1 = (level1::xi1_l1(d + h, alpha) - level1::xi1_l1(d - h, alpha)) / (2.0 * h);
        const double fd2 = (level1::dxi1_l1(d + h, alpha) - level1::dxi1_l1(d - h, alpha)) / (2.0 * h);
        const double a1 = level1::dxi1_l1(d, alpha);
        const double a2 = level1::d2xi1_l1(d, alpha);
        worst1 = std::max(worst1, std::abs(fd1 - a1) / std::max(1.0, std::abs(a1)));
        worst2 = std::max(worst2, std::abs(fd2 - a2) / std::max(1.0, std::abs(a2)));
      }
    }
    checks.push_back({"level1-first-derivative", worst1, 1e-6});
    checks.push_back({"level1-second-derivative", worst2, 1e-6});
  }

  bool all = true;
  std::ostringstream report;
  for (const auto& c : checks) {
    all = all && c.pass();
    report << fmt::format("{} {:<26} {:.3e} (tol {:.0e})\n", c.pass() ? "PASS" : "FAIL", c.name, c.value, c.tol);
  }
  for (const auto& c : checks) {
    if (!c.pass()) report << fmt::format("failed: {} = {:.3e} exceeds {:.0e}\n", c.name, c.value, c.tol);
  }
  report << fmt::format("{} of {} checks passed\n",
                        std::count_if(checks.begin(), checks.end(), [](const Check& c) { return c.pass(); }), checks.size());
  res.text = report.str();
  json doc = json::array();
  for (const auto& c : checks) doc.push_back({{"name", c.name}, {"value", c.value}, {"tol", c.tol}, {"points", c.points}, {"pass", c.pass()}});
  res.document = {{"checks", doc}, {"passed", all}, {"manifest", res.manifest.to_json()}};
  res.exit_code = all ? kExitOk : kExitVerifyFailed;
  return res;
}

CommandResult replay(const RunManifest& m) {
  const json& p = m.parameters;
  if (m.command == "capacity") {
    return cmd_capacity({parse_basin(p.at("basin").get<std::string>()), p.at("level").get<int>(),
                         p.at("quad_order").get<int>(), p.at("tol").get<double>()});
  }
  if (m.command == "curve") {
    return cmd_curve({p.at("alpha").get<double>(), p.at("level").get<int>(), p.at("delta_min").get<double>(),
                      p.at("delta_max").get<double>(), p.at("steps").get<int>(), p.at("quad_order").get<int>()});
  }
  if (m.command == "solve") {
    SolveArgs a;
    a.alpha = p.at("alpha").get<double>();
    a.delta = p.at("delta").get<double>();
    a.quad_order = p.at("quad_order").get<int>();
    a.tol = p.at("tol").get<double>();
    if (p.contains("p2")) a.p2 = p["p2"].get<double>();
    if (p.contains("q2")) a.q2 = p["q2"].get<double>();
    if (p.contains("nu")) a.nu = p["nu"].get<double>();
    return cmd_solve(a);
  }
  if (m.command == "simulate") {
    SimulateArgs a;
    auto& e = a.experiment;
    e.n = p.at("n").get<int>();
    e.alpha = p.at("alpha").get<double>();
    e.flip_frac = p.at("flip_frac").get<double>();
    e.trials = p.at("trials").get<int>();
    e.seed = p.at("seed").get<std::uint64_t>();
    e.delta_tol = p.at("delta_tol").get<double>();
    e.dynamics.max_sweeps = p.at("max_sweeps").get<int>();
    e.dynamics.update_order =
        p.at("update_order").get<std::string>() == "cyclic" ? sim::UpdateOrder::cyclic : sim::UpdateOrder::random_permutation;
    a.per_trial = p.value("per_trial", false);
    return cmd_simulate(a);
  }
  if (m.command == "verify") {
    return cmd_verify({p.at("quad_order").get<int>(), p.at("seed").get<std::uint64_t>(), {}});
  }
  throw std::invalid_argument(fmt::format("manifest names unknown command '{}'", m.command));
}

namespace {

void write_file(const std::string& path, const std::string& body) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error(fmt::format("cannot open '{}' for writing", path));
  f << body;
  if (!f) throw std::runtime_error(fmt::format("write to '{}' failed", path));
}

// Routes a result to stdout or files. CSV bodies keep their exact header, so
// their manifest goes to a sidecar file (or the diagnostic stream).
void emit(const CommandResult& r, const std::string& out_path, const std::string& per_trial_path, bool csv_body,
          std::ostream& out, std::ostream& err) {
  for (const auto& w : r.warnings) err << "warning: " << w << '\n';
  const std::string manifest = r.manifest.to_json().dump(2) + "\n";
  if (csv_body) {
    if (out_path.empty()) {
      out << r.text;
      err << "manifest: " << r.manifest.to_json().dump() << '\n';
    } else {
      write_file(out_path, r.text);
      write_file(out_path + ".manifest.json", manifest);
    }
    return;
  }
  if (!r.text.empty()) out << r.text;
  const std::string doc = r.document.dump(2) + "\n";
  if (out_path.empty()) {
    if (r.text.empty()) out << doc;
  } else {
    write_file(out_path, doc);
  }
  if (!per_trial_path.empty()) {
    write_file(per_trial_path, r.per_trial_csv);
    write_file(per_trial_path + ".manifest.json", manifest);
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hebbian-Hopfield associative memory capacity solver"};
  app.set_version_flag("--version", version());
  app.require_subcommand(1);

  std::string out_path, per_trial_path;

  std::string basin = "ags";
  int level = 1;
  int quad_order = specfun::kDefaultQuadOrder;
  double tol = 0.0;
  auto* cap = app.add_subcommand("capacity", "Capacity threshold for a basin notion and lifting level");
  cap->add_option("--basin", basin, "ags, nlt or glm")->check(CLI::IsMember({"ags", "nlt", "glm"}, CLI::ignore_case));
  cap->add_option("--level", level, "lifting level")->check(CLI::IsMember({1, 2}));
  cap->add_option("--quad-order", quad_order, "outer quadrature nodes")->check(CLI::Range(2, 4096));
  cap->add_option("--tol", tol, "solver tolerance (default 1e-10 level 1, 1e-8 level 2)")->check(CLI::PositiveNumber);
  cap->add_option("--out", out_path, "write JSON here");

  double alpha = 0.0, delta = 0.0;
  std::string range = "0:0.5:100";
  auto* curve = app.add_subcommand("curve", "xi_tot(delta) landscape as CSV");
  curve->add_option("--alpha", alpha, "pattern ratio m/n")->required()->check(CLI::PositiveNumber);
  curve->add_option("--level", level, "lifting level")->check(CLI::IsMember({1, 2}));
  curve->add_option("--delta-range", range, "min:max:steps");
  curve->add_option("--quad-order", quad_order, "outer quadrature nodes")->check(CLI::Range(2, 4096));
  curve->add_option("--out", out_path, "write CSV here (manifest to PATH.manifest.json)");

  std::optional<double> p2, q2, nu;
  double solve_tol = 1e-8;
  auto* solve = app.add_subcommand("solve", "Level-2 stationary point at one (alpha, delta)");
  solve->add_option("--alpha", alpha, "pattern ratio m/n")->required()->check(CLI::PositiveNumber);
  solve->add_option("--delta", delta, "overlap deficit in (0, 0.5]")->required();
  solve->add_option("--p2", p2, "initial p2");
  solve->add_option("--q2", q2, "initial q2 (> p2)");
  solve->add_option("--nu", nu, "initial nu");
  solve->add_option("--quad-order", quad_order, "outer quadrature nodes")->check(CLI::Range(2, 4096));
  solve->add_option("--tol", solve_tol, "residual tolerance")->check(CLI::PositiveNumber);
  solve->add_option("--out", out_path, "write JSON here");

  SimulateArgs sa;
  std::string update_order = "cyclic";
  auto* simc = app.add_subcommand("simulate", "Monte Carlo retrieval experiment");
  simc->add_option("--n", sa.experiment.n, "neurons")->check(CLI::Range(2, 1 << 20));
  simc->add_option("--alpha", sa.experiment.alpha, "pattern ratio m/n")->check(CLI::PositiveNumber);
  simc->add_option("--flip-frac", sa.experiment.flip_frac, "fraction of corrupted bits in [0, 0.5)");
  simc->add_option("--trials", sa.experiment.trials, "independent trials");
  simc->add_option("--seed", sa.experiment.seed, "master seed");
  simc->add_option("--delta-tol", sa.experiment.delta_tol, "retrieval means overlap >= 1 - 2 delta_tol");
  simc->add_option("--max-sweeps", sa.experiment.dynamics.max_sweeps, "sweep budget per trial");
  simc->add_option("--update-order", update_order, "cyclic or random")->check(CLI::IsMember({"cyclic", "random"}));
  simc->add_option("--out", out_path, "write JSON here");
  simc->add_option("--per-trial", per_trial_path, "write per-trial CSV here");

  std::uint64_t verify_seed = 1;
  auto* ver = app.add_subcommand("verify", "Gradient, closed-form, limit and quadrature self-checks");
  ver->add_option("--quad-order", quad_order, "outer quadrature nodes")->check(CLI::Range(2, 2048));
  ver->add_option("--seed", verify_seed, "seed for the random test points");
  ver->add_option("--out", out_path, "write JSON report here");

  std::string manifest_path;
  auto* rep = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  rep->add_option("manifest", manifest_path, "manifest JSON (or any output embedding one)")->required()->check(CLI::ExistingFile);
  rep->add_option("--out", out_path, "output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    CommandResult r;
    bool csv = false;
    if (*cap) {
      r = cmd_capacity({parse_basin(basin), level, quad_order, tol});
    } else if (*curve) {
      CurveArgs ca;
      ca.alpha = alpha;
      ca.level = level;
      ca.quad_order = quad_order;
      const auto first = range.find(':');
      const auto second = range.find(':', first == std::string::npos ? first : first + 1);
      if (first == std::string::npos || second == std::string::npos) {
        throw std::invalid_argument(fmt::format("--delta-range expects min:max:steps, got '{}'", range));
      }
      std::size_t used = 0;
      ca.delta_min = std::stod(range.substr(0, first));
      ca.delta_max = std::stod(range.substr(first + 1, second - first - 1));
      const std::string steps = range.substr(second + 1);
      ca.steps = std::stoi(steps, &used);
      if (used != steps.size()) throw std::invalid_argument("--delta-range steps must be an integer");
      r = cmd_curve(ca);
      csv = true;
    } else if (*solve) {
      SolveArgs s;
      s.alpha = alpha;
      s.delta = delta;
      s.p2 = p2;
      s.q2 = q2;
      s.nu = nu;
      s.quad_order = quad_order;
      s.tol = solve_tol;
      r = cmd_solve(s);
    } else if (*simc) {
      sa.experiment.dynamics.update_order =
          update_order == "cyclic" ? sim::UpdateOrder::cyclic : sim::UpdateOrder::random_permutation;
      sa.per_trial = !per_trial_path.empty();
      r = cmd_simulate(sa);
    } else if (*ver) {
      r = cmd_verify({quad_order, verify_seed, {}});
    } else if (*rep) {
      std::ifstream f(manifest_path);
      json j = json::parse(f);
      if (j.contains("manifest")) j = j["manifest"];
      r = replay(RunManifest::from_json(j));
      csv = r.manifest.command == "curve";
      if (r.manifest.command == "simulate" && r.manifest.parameters.value("per_trial", false) && !out_path.empty()) {
        per_trial_path = out_path + ".per_trial.csv";
      }
    }
    emit(r, out_path, per_trial_path, csv, out, err);
    return r.exit_code;
  } catch (const solvers::NoSignChangeError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNoConvergence;
  } catch (const std::logic_error& e) {
    // invalid_argument, domain_error, out_of_range: bad input
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitNoConvergence;
  }
}

}  // namespace hopcap::cli
