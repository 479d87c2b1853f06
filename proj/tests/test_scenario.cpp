#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "singmix/error.hpp"
#include "singmix/scenario.hpp"

using namespace singmix;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

ErrorCode code_of(const json& config) {
  try {
    run_scenario(config);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::InvalidInput;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("singmix_test_" + name);
  fs::remove_all(p);
  return p;
}

int cli(const std::string& args) {
  const int status = std::system((std::string(SINGMIX_CLI) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Small configurations of every scenario for the determinism harness.
std::vector<json> quick_configs() {
  return {
      {{"scenario", "lorenz-dissipativity"}, {"samples", 2000}},
      {{"scenario", "quotient-map"}, {"grid", {{"uniform_points", 51}, {"levels", 10}}}},
      {{"scenario", "induce"}},
      {{"scenario", "uni-check"}},
      {{"scenario", "spectrum"}, {"seed", 3}, {"ensemble", 10}, {"transfer", {{"nodes", 513}}}},
      {{"scenario", "contraction"}, {"seed", 3}, {"ensemble", 5}, {"n_max", 20}, {"transfer", {{"nodes", 513}}}},
      {{"scenario", "mixing-fit"}, {"seed", 3}, {"samples", 20000}, {"t_max", 2.0}},
      {{"scenario", "equilibrium-convergence"}, {"seed", 3}, {"samples", 20000}, {"t_max", 2.0}},
      {{"scenario", "clt"}, {"n_blocks", 50}, {"block_len", 20}, {"transient", 20.0}},
      {{"scenario", "visits"}, {"seed", 3}, {"samples", 20000}, {"t_max", 2.0}},
      {{"scenario", "semiconjugacy"}, {"seed", 3}, {"pairs", 200}},
  };
}

}  // namespace

TEST_CASE("config validation") {
  CHECK(code_of({{"scenario", "frobnicate"}}) == ErrorCode::UsageError);
  CHECK(code_of(json::array()) == ErrorCode::UsageError);
  CHECK(code_of({{"seed", 1}}) == ErrorCode::UsageError);
  CHECK(code_of({{"scenario", "uni-check"}, {"bogus", 1}}) == ErrorCode::UsageError);
  CHECK(code_of({{"scenario", "uni-check"}, {"induction", {{"bogus", 1}}}}) == ErrorCode::UsageError);
  CHECK(code_of({{"scenario", "uni-check"}, {"n0", "three"}}) == ErrorCode::UsageError);
  CHECK(code_of({{"scenario", "uni-check"}, {"n0", 2.5}}) == ErrorCode::UsageError);
  CHECK(code_of({{"scenario", "uni-check"}, {"roof", {{"kind", "spiral"}}}}) == ErrorCode::UsageError);
  CHECK(code_of({{"scenario", "uni-check"}, {"map", {{"family", "tent"}}}}) == ErrorCode::UsageError);
  CHECK(code_of({{"scenario", "visits"}, {"samples", 1000}}) == ErrorCode::UsageError);  // no seed
  CHECK(code_of({{"scenario", "visits"}, {"seed", -4}}) == ErrorCode::UsageError);
  CHECK(code_of({{"scenario", "mixing-fit"}, {"seed", 1}, {"system", "pendulum"}}) == ErrorCode::UsageError);
  // flow keys do not exist for a suspension
  CHECK(code_of({{"scenario", "mixing-fit"}, {"seed", 1}, {"orbit_length", 10.0}}) == ErrorCode::UsageError);
  // the seed override satisfies the requirement
  const auto b = run_scenario({{"scenario", "visits"}, {"samples", 2000}, {"t_max", 1.0}}, 9u);
  CHECK(b.summary["seed"] == 9);
}

TEST_CASE("defaults are echoed and the schema is present") {
  const auto b = run_scenario({{"scenario", "uni-check"}});
  const auto& s = b.summary;
  for (const char* k : {"scenario", "seed", "version", "verdict", "config"}) CHECK(s.contains(k));
  CHECK(s["seed"].is_null());
  CHECK(s["version"] == kSchemaVersion);
  CHECK(s["config"]["roof"]["kind"] == "square");
  CHECK(s["config"]["induction"]["base_radius"] == 0.5);
  CHECK(s["config"]["n0"] == 1);
}

TEST_CASE("uni-check on doubling + x^2: derivative D = 1/2") {
  const auto b = run_scenario({{"scenario", "uni-check"}, {"map", {{"family", "doubling"}}}, {"mode", "derivative"}});
  CHECK(b.summary["mode"] == "derivative");
  CHECK(std::abs(b.summary["D"].get<double>() - 0.5) <= 1e-9);
  CHECK(b.exit_code() == 0);

  // 000111 against 001011: Birkhoff sums 7791/3969 and 7035/3969
  const auto p = run_scenario({{"scenario", "uni-check"},
                               {"mode", "periodic"},
                               {"word1", {0, 0, 0, 1, 1, 1}},
                               {"word2", {0, 0, 1, 0, 1, 1}}});
  CHECK(std::abs(p.summary["S1"].get<double>() - 7791.0 / 3969.0) <= 1e-13);
  CHECK(std::abs(p.summary["S2"].get<double>() - 7035.0 / 3969.0) <= 1e-13);

  const auto cob = run_scenario({{"scenario", "uni-check"}, {"roof", {{"kind", "coboundary"}}}, {"n0", 12}});
  CHECK(cob.summary["verdict"] == "fail");
  CHECK(cob.exit_code() == 2);
  CHECK(cob.summary["D"].get<double>() <= 2 * (2 * M_PI / 10) * std::pow(0.5, 12));
}

TEST_CASE("lorenz-dissipativity: pass at q = 1.278, fail beyond q_max") {
  const auto b = run_scenario({{"scenario", "lorenz-dissipativity"}, {"q", 1.278}, {"samples", 20000}});
  CHECK(b.summary["verdict"] == "pass");
  CHECK(b.summary["results"]["condition_a"].size() == 3);
  CHECK(b.summary["results"]["condition_b"].get<double>() < 0.0);
  CHECK(b.tables.at(0).second.rfind("equilibrium,margin,base,top_real\n", 0) == 0);
  // q_max at the origin is about 1.705
  const auto f = run_scenario({{"scenario", "lorenz-dissipativity"}, {"q", 1.8}, {"samples", 2000}});
  CHECK(f.summary["verdict"] == "fail");
  CHECK(f.exit_code() == 2);
}

TEST_CASE("negative controls pass when expected") {
  const auto c = run_scenario({{"scenario", "contraction"},
                               {"seed", 1},
                               {"roof", {{"kind", "unit"}}},
                               {"ensemble", 10},
                               {"n_max", 30},
                               {"expect", "no-decay"}});
  CHECK(c.summary["verdict"] == "pass");
  CHECK(c.summary["results"]["curve_min"].get<double>() >= 0.8);
  CHECK(c.summary["results"]["curve_max"].get<double>() <= 1.2);
  const auto m = run_scenario({{"scenario", "mixing-fit"},
                               {"seed", 1},
                               {"roof", {{"kind", "unit"}}},
                               {"samples", 200000},
                               {"t_step", 0.125},
                               {"t_max", 4.0},
                               {"expect", "nondecaying"}});
  CHECK(m.summary["verdict"] == "pass");
  CHECK(m.summary["results"]["period"].get<double>() == doctest::Approx(1.0));
  const auto v = run_scenario(
      {{"scenario", "visits"}, {"seed", 1}, {"roof", {{"kind", "unit"}}}, {"t_step", 0.3}, {"t_max", 4.2}});
  CHECK(v.summary["verdict"] == "pass");
  CHECK(v.summary["results"].contains("closed_form_max_gap"));
}

TEST_CASE("emit_report: empty bundle, CSV schema, IoError") {
  const auto dir = scratch("empty");
  emit_report(ReportBundle{}, dir);
  CHECK(json::parse(slurp(dir / "summary.json")) == json{{"version", kSchemaVersion}});

  const auto m = run_scenario({{"scenario", "mixing-fit"}, {"seed", 2}, {"samples", 20000}, {"t_max", 1.0}});
  const auto out = scratch("mixing");
  emit_report(m, out);
  CHECK(slurp(out / "series.csv").rfind("t,value,se\n", 0) == 0);
  CHECK(json::parse(slurp(out / "summary.json"))["fits"]["correlation"].contains("c"));

  // a regular file in the way of the directory
  const auto blocker = scratch("blocker");
  std::ofstream(blocker) << "x";
  try {
    emit_report(m, blocker / "sub");
    FAIL("expected IoError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IoError);
  }
}

TEST_CASE("determinism: every scenario twice with the same seed") {
  for (const auto& cfg : quick_configs()) {
    const std::string name = cfg["scenario"];
    CAPTURE(name);
    const auto a = run_scenario(cfg), b = run_scenario(cfg);
    CHECK(summary_text(a) == summary_text(b));
    REQUIRE(a.tables.size() == b.tables.size());
    for (std::size_t i = 0; i < a.tables.size(); ++i) CHECK(a.tables[i] == b.tables[i]);
  }
  CHECK(quick_configs().size() == scenario_names().size());
}

TEST_CASE("command line: exit codes and byte-identical reruns") {
  const auto dir = scratch("cli");
  fs::create_directories(dir);
  auto write = [&](const std::string& name, const json& j) {
    std::ofstream(dir / name) << j.dump();
    return (dir / name).string();
  };
  const auto good = write("uni.json", {{"scenario", "uni-check"}});
  const auto bad = write("bad.json", {{"scenario", "frobnicate"}});
  const auto cob = write("cob.json", {{"scenario", "uni-check"}, {"roof", {{"kind", "coboundary"}}}});
  const auto vis = write("vis.json", {{"scenario", "visits"}, {"samples", 5000}, {"t_max", 1.0}});
  std::ofstream(dir / "broken.json") << "{";

  CHECK(cli("run " + good + " --out " + (dir / "a").string()) == 0);
  CHECK(fs::exists(dir / "a" / "summary.json"));
  CHECK(cli("run " + bad + " --out " + (dir / "b").string()) == 1);
  CHECK(cli("run " + cob + " --out " + (dir / "c").string()) == 2);
  CHECK(cli("run " + (dir / "broken.json").string()) == 1);
  CHECK(cli("run " + (dir / "missing.json").string()) == 1);
  CHECK(cli("frobnicate") == 1);
  CHECK(cli("run " + vis + " --out " + (dir / "v0").string()) == 1);  // no seed
  CHECK(cli("run " + vis + " --seed 5 --out " + (dir / "v1").string()) == 0);
  CHECK(cli("run " + vis + " --seed 5 --out " + (dir / "v2").string()) == 0);
  CHECK(slurp(dir / "v1" / "summary.json") == slurp(dir / "v2" / "summary.json"));
  CHECK(slurp(dir / "v1" / "series.csv") == slurp(dir / "v2" / "series.csv"));
  CHECK(cli("run " + vis + " --seed 6 --out " + (dir / "v3").string()) == 0);
  CHECK(slurp(dir / "v1" / "series.csv") != slurp(dir / "v3" / "series.csv"));
  // the worker cap does not change the bytes
  CHECK(std::system(("SINGMIX_THREADS=1 " + std::string(SINGMIX_CLI) + " run " + vis + " --seed 5 --out " +
                     (dir / "v4").string() + " >/dev/null")
                        .c_str()) == 0);
  CHECK(slurp(dir / "v1" / "series.csv") == slurp(dir / "v4" / "series.csv"));
}
