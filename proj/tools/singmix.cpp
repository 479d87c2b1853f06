#include <omp.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "singmix/error.hpp"
#include "singmix/scenario.hpp"

namespace {

void cap_threads() {
  const char* env = std::getenv("SINGMIX_THREADS");
  if (!env || !*env) return;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1) throw singmix::Error(singmix::ErrorCode::UsageError, "SINGMIX_THREADS must be a positive integer");
  omp_set_num_threads(static_cast<int>(n));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mixing diagnostics for singular-hyperbolic flows"};
  app.require_subcommand(1);
  auto* run = app.add_subcommand("run", "run one scenario and write its report");
  std::string config_path, out_dir = ".";
  std::optional<std::uint64_t> seed;
  run->add_option("config", config_path, "scenario config (JSON)")->required();
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--seed", seed, "overrides the config seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // CLI11 returns 0 for --help; argument errors map to 1
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    cap_threads();
    std::ifstream in(config_path);
    if (!in) throw singmix::Error(singmix::ErrorCode::IoError, "cannot read " + config_path);
    nlohmann::json config;
    try {
      config = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw singmix::Error(singmix::ErrorCode::UsageError, std::string("invalid JSON: ") + e.what());
    }
    // a config "out" applies unless --out was given
    if (run->count("--out") == 0 && config.is_object() && config.contains("out")) {
      if (!config["out"].is_string()) throw singmix::Error(singmix::ErrorCode::UsageError, "'out' must be a string");
      out_dir = config["out"].get<std::string>();
    }
    const auto bundle = singmix::run_scenario(config, seed);
    singmix::emit_report(bundle, out_dir);
    const int code = bundle.exit_code();
    std::cout << bundle.summary["scenario"].get<std::string>() << ": "
              << (bundle.summary.contains("verdict") ? bundle.summary["verdict"].get<std::string>() : "done") << '\n';
    return code;
  } catch (const singmix::Error& e) {
    std::cerr << "singmix: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "singmix: " << e.what() << '\n';
    return 1;
  }
}
