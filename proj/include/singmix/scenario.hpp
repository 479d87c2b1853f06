#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace singmix {

inline constexpr const char* kSchemaVersion = "1.0";

// Summary JSON plus named CSV tables. An empty bundle has a null summary.
struct ReportBundle {
  nlohmann::json summary;
  std::vector<std::pair<std::string, std::string>> tables;  // file name, CSV text

  bool empty() const { return summary.is_null() && tables.empty(); }
  // 0 without a verdict or on "pass", 2 otherwise
  int exit_code() const;
};

const std::vector<std::string>& scenario_names();

// Validates the config against the scenario's defaults (unknown keys and
// mistyped values raise UsageError), runs it and returns the bundle. The
// effective configuration is echoed under "config".
ReportBundle run_scenario(const nlohmann::json& config, std::optional<std::uint64_t> seed_override = std::nullopt);

// Writes summary.json and the tables into dir, creating it if needed.
// Throws IoError when a file cannot be written.
void emit_report(const ReportBundle& bundle, const std::filesystem::path& dir);

// Serialized forms written by emit_report.
std::string summary_text(const ReportBundle& bundle);

}  // namespace singmix
