#pragma once

// Simulated teams flying the experiment protocol, one mission per allocation
// strategy. Every strategy sees the same team (initial workloads, transition
// noise), so columns of the resulting matrix are paired like the human study.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "awac/allocator.hpp"
#include "awac/env.hpp"
#include "awac/hpm.hpp"
#include "awac/stats.hpp"

namespace awac {

struct BenchStrategy {
  std::string label;  // column label in the trial matrix
  TaskSpec task;
};

// Accepts task letters A-H or strategy names (FixedEqual, AwacISPS, ...).
BenchStrategy parse_bench_strategy(const std::string& token);

struct MissionConfig {
  EnvConfig env;
  HpmParams hpm = HpmParams::defaults();
  IsaBiasModel isa_bias;
  double accept_probability = kDefaultAcceptProbability;
  std::shared_ptr<const AllocationPolicy> policy;  // null: greedy lookahead
};

struct MissionResult {
  std::vector<PerformanceScore> set_perf;  // team performance during each set
  std::vector<std::vector<int>> set_views;
  double raw_score = 0.0;                  // 100 * mean set performance
};

// One team (identified by its seed) under one strategy.
MissionResult simulate_mission(const MissionConfig& config, const BenchStrategy& strategy,
                               std::uint64_t team_seed);

// teams x strategies matrix of raw scores; rows T1..Tn. Throws ConfigError for
// fewer than 2 strategies or teams.
TrialMatrix simulate_bench(const MissionConfig& config, const std::vector<BenchStrategy>& strategies,
                           int teams, std::uint64_t seed);
TrialMatrix simulate_bench_serial(const MissionConfig& config,
                                  const std::vector<BenchStrategy>& strategies, int teams,
                                  std::uint64_t seed);

}  // namespace awac
