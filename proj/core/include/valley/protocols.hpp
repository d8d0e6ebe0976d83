#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace valley::cli {

inline constexpr const char* kToolkitName = "valley";
inline constexpr const char* kToolkitVersion = "0.1.0";

// Malformed or inconsistent configuration; maps to exit code 2 and no
// partial outputs.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  std::string protocol;
  nlohmann::json params = nlohmann::json::object();
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;
};

[[nodiscard]] ExperimentConfig config_from_json(const nlohmann::json& doc);
[[nodiscard]] nlohmann::json to_json(const ExperimentConfig& config);

struct ProtocolInfo {
  std::string id;
  std::string summary;
  std::string demo;  // which experiment of the study it reproduces, at desk scale
};

// Stable lexicographic order by id.
[[nodiscard]] std::vector<ProtocolInfo> list_protocols();

struct RunResult {
  int exit_code = 0;  // 0 pass / recorded-only, 1 any fail verdict
  nlohmann::json report;
  std::vector<std::string> files;  // artifact names written under out_dir
};

// Validates the config, runs the protocol, and writes report.json plus the
// protocol's artifacts atomically under config.out_dir. Throws ConfigError
// (exit 2) before anything is written when the config is malformed.
[[nodiscard]] RunResult run_protocol(const ExperimentConfig& config);

}  // namespace valley::cli
