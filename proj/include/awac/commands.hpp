#pragma once

// Command implementations behind the `awac` CLI. Each command writes its
// outputs and a manifest.json into one run directory.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "awac/config.hpp"
#include "awac/evaluate.hpp"
#include "awac/stats.hpp"

namespace awac {

struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::string started_at;   // UTC, ISO 8601
  std::string finished_at;
  std::vector<std::string> outputs;  // file names relative to the run directory

  nlohmann::json to_json() const;
  void write(const std::filesystem::path& run_dir) const;
};

// "<output_dir>/<UTC timestamp>-seed<seed>", made unique with a suffix.
std::filesystem::path default_run_dir(const std::string& output_dir, std::uint64_t seed);
std::string utc_timestamp();

struct CommandContext {
  std::filesystem::path run_dir;
  std::vector<std::string> argv;
  std::ostream* log = nullptr;  // progress and reports; null for quiet
};

// Trains a policy: policy.bin, train_metrics.csv, manifest.json.
RunManifest cmd_train(const AppConfig& config, const CommandContext& ctx);

struct ValidationReport {
  std::int64_t episodes = 0;
  std::uint64_t seed = 0;
  std::string policy;     // checkpoint path, or "random"
  PairedTest test;        // a = policy final performance, b = random
  bool insufficient_n = false;

  nlohmann::json to_json() const;
  std::string to_text() const;
};

// Paired comparison of `policy` (or a second random allocator when null)
// against random allocation on identical episode seeds.
ValidationReport validate_against_random(const PolicyParams* policy, const EnvConfig& env,
                                         const HpmParams& hpm, std::int64_t episodes,
                                         std::uint64_t seed,
                                         std::vector<EpisodeRecord>* policy_records = nullptr,
                                         std::vector<EpisodeRecord>* random_records = nullptr);

// validation.json, validation.txt, episodes.csv. validate.checkpoint may be
// "random" for a random-vs-random control.
RunManifest cmd_validate(const AppConfig& config, const CommandContext& ctx);

// bench_raw.csv, bench_normalized.csv, report.txt, report.json.
RunManifest cmd_bench(const AppConfig& config, const CommandContext& ctx);

struct StatsOptions {
  std::filesystem::path csv;
  std::vector<std::vector<std::string>> column_sets;  // empty: all columns
  double alpha = 0.1;
  bool normalize = false;
  std::uint64_t seed = 0;
};

std::vector<StatsReport> run_stats(const StatsOptions& options);
// report.txt and report.json.
RunManifest cmd_stats(const StatsOptions& options, const CommandContext& ctx);

// Blocks until SIGINT/SIGTERM.
RunManifest cmd_serve(const AppConfig& config, const CommandContext& ctx);

}  // namespace awac
