#pragma once

// Repo-wide run configuration. One JSON document with optional sections;
// absent keys keep their defaults, unknown keys are rejected. See
// docs/config.md for the schema.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "awac/env.hpp"
#include "awac/hpm.hpp"
#include "awac/ppo.hpp"
#include "awac/session.hpp"

namespace awac {

struct BenchSettings {
  std::vector<std::string> strategies = {"A", "D", "F", "H"};
  int teams = 16;
  double accept_probability = 0.6493;
  double isa_bias_probability = 0.0;
  int isa_bias_offset = 0;
  std::string policy;  // checkpoint path; empty uses greedy lookahead
  double alpha = 0.1;
};

struct ValidateSettings {
  std::int64_t episodes = 10'000;
  std::string checkpoint;
};

struct ServeSettings {
  std::string bind = "127.0.0.1";
  int port = 8080;
  std::string log_dir = "logs";
  std::string predictor_url;
  std::string policy;
  int tick_ms = 10;
};

struct AppConfig {
  std::uint64_t seed = 0;
  HpmParams hpm = HpmParams::defaults();
  EnvConfig env;
  PpoConfig ppo;
  SessionConfig session;
  BenchSettings bench;
  ValidateSettings validate;
  ServeSettings serve;
  std::string output_dir = "runs";

  // Pushes the top-level seed into env/ppo and checks every section.
  void finalize();
};

// Applies `j` on top of `base`. Throws ConfigError on unknown keys, wrong
// types or invalid values.
AppConfig apply_config_json(AppConfig base, const nlohmann::json& j);
AppConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const AppConfig& config);

}  // namespace awac
