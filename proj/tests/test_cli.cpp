#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <unistd.h>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "hopcap/cli.hpp"

using namespace hopcap;
using namespace hopcap::cli;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "hopcap");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch_dir() {
  auto p = fs::temp_directory_path() / ("hopcap_cli_test_" + std::to_string(::getpid()));
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

json without_manifest(json j) {
  j.erase("manifest");
  return j;
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST_CASE("format_decimal") {
  CHECK(format_decimal(0.5) == "0.500000000000");
  CHECK(format_decimal(1e-5) == "0.0000100000000000");
  CHECK(format_decimal(123.456) == "123.456000000");
  CHECK(format_decimal(-2.1372) == "-2.13720000000");
  CHECK(format_decimal(0.0) == "0");
  CHECK(format_decimal(1e-300).find('e') == std::string::npos);
}

TEST_CASE("capacity level 1") {
  const auto r = cmd_capacity({BasinKind::ags, 1, 80, 0.0});
  CHECK(r.exit_code == kExitOk);
  const auto& d = r.document;
  CHECK(std::fabs(d.at("alpha_c").get<double>() - 0.137905566) <= 1e-6);
  CHECK(std::fabs(d.at("delta_hat").get<double>() - 0.0163) <= 5e-4);
  CHECK(std::fabs(d.at("params").at("nu").get<double>() + 2.1372) <= 1e-3);
  CHECK(d.at("manifest").at("command") == "capacity");

  const auto glm = cmd_capacity({BasinKind::glm, 1, 80, 0.0});
  CHECK(std::fabs(glm.document.at("alpha_c").get<double>() - 0.051854) <= 1e-5);
}

TEST_CASE("capacity level 2 through argv") {
  const auto r = invoke({"capacity", "--basin", "nlt", "--level", "2"});
  REQUIRE(r.code == kExitOk);
  const auto d = json::parse(r.out);
  CHECK(std::fabs(d.at("alpha_c").get<double>() - 0.12979) <= 2e-4);
}

TEST_CASE("curve CSV") {
  const auto r = invoke({"curve", "--alpha", "0.137906", "--level", "1", "--delta-range", "0:0.05:1"});
  REQUIRE(r.code == kExitOk);
  const auto ls = lines(r.out);
  REQUIRE(ls.size() == 3);
  CHECK(ls[0] == "delta,xi,xi1,xi_tot");
  CHECK(ls[1].rfind("0,", 0) == 0);
  CHECK(ls[1].substr(ls[1].rfind(',') + 1) == "0");
  const std::regex plain("^-?[0-9]+(\\.[0-9]+)?$");
  for (std::size_t i = 1; i < ls.size(); ++i) {
    std::stringstream row(ls[i]);
    for (std::string f; std::getline(row, f, ',');) CHECK(std::regex_match(f, plain));
  }
  CHECK(r.err.find("manifest: ") != std::string::npos);
}

TEST_CASE("curve with --out writes a manifest sidecar") {
  const auto dir = scratch_dir();
  const auto csv = (dir / "c.csv").string();
  const auto r = invoke({"curve", "--alpha", "0.12979", "--level", "2", "--delta-range", "0.03:0.04:4", "--out", csv});
  REQUIRE(r.code == kExitOk);
  CHECK(lines(slurp(csv)).size() == 6);
  const auto m = json::parse(slurp(csv + ".manifest.json"));
  CHECK(m.at("command") == "curve");

  const auto again = invoke({"replay", csv + ".manifest.json", "--out", (dir / "c2.csv").string()});
  REQUIRE(again.code == kExitOk);
  CHECK(slurp(csv) == slurp(dir / "c2.csv"));
  fs::remove_all(dir);
}

TEST_CASE("solve") {
  SolveArgs a;
  a.alpha = 0.138186;
  a.delta = 0.0167;
  const auto r = cmd_solve(a);
  CHECK(r.exit_code == kExitOk);
  const auto& d = r.document;
  CHECK(std::fabs(d.at("params").at("c2").get<double>() / 16.6192 - 1.0) <= 1e-2);
  CHECK(d.at("collapsed") == false);
}

TEST_CASE("solve from an explicit init that cannot converge exits 2") {
  const auto r = invoke({"solve", "--alpha", "0.13", "--delta", "0.02", "--p2", "0.5", "--q2", "0.6", "--tol", "1e-300"});
  CHECK(r.code == kExitNoConvergence);
}

TEST_CASE("simulate") {
  const auto r = invoke({"simulate", "--n", "1000", "--alpha", "0.05", "--flip-frac", "0.05", "--trials", "50", "--seed", "3"});
  REQUIRE(r.code == kExitOk);
  const auto d = json::parse(r.out);
  CHECK(d.at("m") == 50);
  CHECK(d.at("median_overlap").get<double>() >= 0.97);

  const auto dir = scratch_dir();
  const auto out = (dir / "s.json").string(), per = (dir / "t.csv").string();
  REQUIRE(invoke({"simulate", "--n", "200", "--alpha", "0.1", "--trials", "5", "--out", out, "--per-trial", per}).code ==
          kExitOk);
  const auto pl = lines(slurp(per));
  CHECK(pl.size() == 6);
  CHECK(pl[0] == "trial,final_overlap,sweeps,converged,final_energy");

  const auto again = invoke({"replay", out, "--out", (dir / "s2.json").string()});
  REQUIRE(again.code == kExitOk);
  const auto first = json::parse(slurp(out)), second = json::parse(slurp(dir / "s2.json"));
  CHECK(without_manifest(first) == without_manifest(second));
  CHECK(first.at("manifest").at("parameters") == second.at("manifest").at("parameters"));
  fs::remove_all(dir);
}

TEST_CASE("verify") {
  const auto ok = cmd_verify({});
  CHECK(ok.exit_code == kExitOk);
  CHECK(ok.text.find("FAIL") == std::string::npos);

  VerifyArgs broken;
  broken.mutator = [](level2::Gradient& g) { g[2] = -g[2]; };
  const auto bad = cmd_verify(broken);
  CHECK(bad.exit_code == kExitVerifyFailed);
  CHECK(bad.text.find("FAIL c2-derivative") != std::string::npos);
  CHECK(bad.text.find("FAIL nu-derivative") == std::string::npos);

  CHECK(invoke({"verify", "--quad-order", "4"}).code == kExitVerifyFailed);
}

TEST_CASE("usage errors exit 1") {
  CHECK(invoke({}).code == kExitUsage);
  CHECK(invoke({"frobnicate"}).code == kExitUsage);
  CHECK(invoke({"capacity", "--basin", "xyz"}).code == kExitUsage);
  CHECK(invoke({"capacity", "--level", "3"}).code == kExitUsage);
  CHECK(invoke({"curve", "--alpha", "0.1", "--delta-range", "0:0.5"}).code == kExitUsage);
  CHECK(invoke({"simulate", "--trials", "0"}).code == kExitUsage);
  CHECK(invoke({"simulate", "--flip-frac", "0.7"}).code == kExitUsage);
  CHECK(invoke({"solve", "--alpha", "0.1", "--delta", "0.7"}).code == kExitUsage);
  CHECK(invoke({"replay", "/nonexistent/manifest.json"}).code == kExitUsage);
  CHECK(invoke({"--version"}).code == kExitOk);
}

TEST_CASE("manifest round trip") {
  RunManifest m{"capacity", json{{"basin", "ags"}, {"level", 1}}, version(), "2026-01-01T00:00:00Z", 0};
  const auto back = RunManifest::from_json(m.to_json());
  CHECK(back.command == m.command);
  CHECK(back.parameters == m.parameters);
  CHECK(back.timestamp == m.timestamp);
  const auto r = replay(cmd_capacity({BasinKind::nlt, 1, 80, 0.0}).manifest);
  CHECK(std::fabs(r.document.at("alpha_c").get<double>() - 0.1294899) <= 1e-6);
}
