#pragma once

// Workload-allocation POMDP: n operators share `total_views` camera views.
// Each step reassigns the views, shifts every operator's workload by
// kappa * (change in view count), and rewards the step when predicted team
// performance does not drop.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "awac/hpm.hpp"
#include "awac/rng.hpp"

namespace awac {

inline constexpr double kStepReward = 0.33;

struct EnvConfig {
  int n_operators = 2;
  int total_views = 6;
  int min_views = 1;
  int max_views = 0;  // 0 resolves to total_views - (n_operators - 1) * min_views
  int sets_per_mission = 3;
  double kappa = 0.1;        // workload per camera view
  double noise_sigma = 0.0;  // per-step Gaussian noise on both channels
  double gamma = 0.99;
  std::uint64_t seed = 0;

  int resolved_max_views() const noexcept;
  void validate() const;
};

struct OperatorState {
  WorkloadLevel s_subj;
  WorkloadLevel s_obj;
  int views = 0;

  friend bool operator==(const OperatorState&, const OperatorState&) = default;
};

struct TeamState {
  std::vector<OperatorState> operators;
  int set_index = 0;
  PerformanceScore team_perf = 0.0;
  bool terminated = false;

  friend bool operator==(const TeamState&, const TeamState&) = default;
};

struct AllocationAction {
  std::vector<int> views;

  friend bool operator==(const AllocationAction&, const AllocationAction&) = default;
  friend auto operator<=>(const AllocationAction&, const AllocationAction&) = default;
};

// (s_obj_1..n, s_subj_1..n, views_1..n / total_views)
using Observation = std::vector<double>;

struct StepInfo {
  PerformanceScore team_perf_before = 0.0;
  PerformanceScore team_perf_after = 0.0;
  std::vector<PerformanceScore> operator_perf;
  bool infeasible = false;
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool terminated = false;
  StepInfo info;
};

struct ObservableFields {
  std::vector<double> s_obj;
  std::vector<double> s_subj;
  std::vector<int> views;

  friend bool operator==(const ObservableFields&, const ObservableFields&) = default;
};

// Views split as evenly as possible, remainder to the lowest-index operators.
AllocationAction equal_split(const EnvConfig& config);

bool is_feasible(const AllocationAction& action, const EnvConfig& config) noexcept;

// All feasible assignments in lexicographic order. The index into this list
// is the discrete action id used by the policy head.
std::vector<AllocationAction> feasible_actions(const EnvConfig& config);

PerformanceScore evaluate_team(const TeamState& state, const HpmParams& hpm,
                               std::vector<PerformanceScore>* per_operator = nullptr);

// Initial state: both workload channels i.i.d. uniform on [0,1], equal split.
TeamState reset(const EnvConfig& config, const HpmParams& hpm, std::uint64_t seed);

// Applies the workload dynamics for moving from state.views to action.views
// (no reward, no termination bookkeeping). Shared with mission simulation.
void apply_transition(TeamState& state, const AllocationAction& action,
                      const EnvConfig& config, const HpmParams& hpm, Rng& rng);

// One environment transition. Throws StateError on a terminated state.
StepResult step(TeamState& state, const AllocationAction& action, const EnvConfig& config,
                const HpmParams& hpm, Rng& rng);

Observation encode_observation(const TeamState& state, const EnvConfig& config);
ObservableFields decode_observation(const Observation& obs, const EnvConfig& config);
ObservableFields observable_fields(const TeamState& state);

// Optional systematic misreporting on the self-assessment channel.
struct IsaBiasModel {
  double probability = 0.0;
  int offset = 0;
};

IsaScore simulate_isa_response(WorkloadLevel s_subj, const IsaBiasModel& bias, Rng& rng);

// Stateful single-episode wrapper: owns the generator and the state.
class AllocationEnv {
 public:
  AllocationEnv(EnvConfig config, HpmParams hpm);

  const Observation& reset(std::uint64_t seed);
  StepResult step(const AllocationAction& action);
  StepResult step_index(std::size_t action_index);

  const TeamState& state() const noexcept { return state_; }
  const EnvConfig& config() const noexcept { return config_; }
  const HpmParams& hpm() const noexcept { return hpm_; }
  const std::vector<AllocationAction>& actions() const noexcept { return actions_; }
  int observation_size() const noexcept { return 3 * config_.n_operators; }

 private:
  EnvConfig config_;
  HpmParams hpm_;
  std::vector<AllocationAction> actions_;
  Rng rng_;
  TeamState state_;
  Observation obs_;
};

// JSONL episode trace: a header line carrying the seed and config, then one
// line per step.
class EpisodeTraceWriter {
 public:
  EpisodeTraceWriter(std::ostream& out, const EnvConfig& config, std::uint64_t seed,
                     const TeamState& initial);
  void record(const TeamState& state, const AllocationAction& action, const StepResult& result);

 private:
  std::ostream& out_;
  int step_ = 0;
};

}  // namespace awac
