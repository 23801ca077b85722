#pragma once

// Episode evaluation kernels. Episodes are independent: episode i resets the
// environment with derive_seed(seed, i) and draws any stochastic choice from a
// generator derived from that episode seed, so the OpenMP kernels return
// exactly what their serial references return.

#include <cstdint>
#include <functional>
#include <vector>

#include "awac/allocator.hpp"
#include "awac/env.hpp"
#include "awac/ppo.hpp"

namespace awac {

struct EpisodeRecord {
  std::uint64_t seed = 0;
  PerformanceScore initial_perf = 0.0;
  PerformanceScore final_perf = 0.0;
  double episode_return = 0.0;
  int steps = 0;

  friend bool operator==(const EpisodeRecord&, const EpisodeRecord&) = default;
};

enum class ActionSelection { kGreedy, kSample };

std::uint64_t episode_seed(std::uint64_t seed, std::int64_t episode) noexcept;

// Picks the next assignment for the current state.
using ActionChooser =
    std::function<AllocationAction(const TeamState& state, const Observation& obs, Rng& rng)>;

EpisodeRecord run_episode(const EnvConfig& config, const HpmParams& hpm, std::uint64_t seed,
                          const ActionChooser& choose);

std::vector<EpisodeRecord> evaluate_policy(const PolicyParams& policy, const EnvConfig& config,
                                           const HpmParams& hpm, std::int64_t episodes,
                                           std::uint64_t seed,
                                           ActionSelection mode = ActionSelection::kGreedy);
std::vector<EpisodeRecord> evaluate_policy_serial(const PolicyParams& policy,
                                                  const EnvConfig& config, const HpmParams& hpm,
                                                  std::int64_t episodes, std::uint64_t seed,
                                                  ActionSelection mode = ActionSelection::kGreedy);

// Same episodes driven by an allocation strategy (Random, greedy AWAC, ...).
std::vector<EpisodeRecord> evaluate_strategy(const Allocator& allocator, const EnvConfig& config,
                                             const HpmParams& hpm, std::int64_t episodes,
                                             std::uint64_t seed);
std::vector<EpisodeRecord> evaluate_strategy_serial(const Allocator& allocator,
                                                    const EnvConfig& config, const HpmParams& hpm,
                                                    std::int64_t episodes, std::uint64_t seed);

}  // namespace awac
