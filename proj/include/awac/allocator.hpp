#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "awac/env.hpp"
#include "awac/hpm.hpp"
#include "awac/rng.hpp"

namespace awac {

enum class StrategyKind { kFixedEqual, kFixedNegotiated, kRandom, kAwacIS, kAwacPS, kAwacISPS };

std::string_view to_string(StrategyKind kind) noexcept;
StrategyKind parse_strategy(std::string_view name);

// Which workload channels a strategy is allowed to read.
bool uses_subjective(StrategyKind kind) noexcept;
bool uses_objective(StrategyKind kind) noexcept;

// One row of the experiment's task matrix (tasks A..H).
struct TaskSpec {
  char letter = 'A';
  bool fixed = false;
  bool isa_session = false;
  bool prediction_session = false;
  bool approval_session = false;
  StrategyKind strategy = StrategyKind::kFixedEqual;
};

TaskSpec task_spec(char letter);
const std::vector<TaskSpec>& task_matrix();

inline constexpr double kDefaultAcceptProbability = 0.6493;

struct ApprovalPolicy {
  enum class Kind { kNone, kSimulated, kInteractive };
  Kind kind = Kind::kNone;
  double accept_prob = kDefaultAcceptProbability;

  static ApprovalPolicy none() { return {Kind::kNone, kDefaultAcceptProbability}; }
  static ApprovalPolicy simulated(double p = kDefaultAcceptProbability);
  static ApprovalPolicy interactive() { return {Kind::kInteractive, kDefaultAcceptProbability}; }
};

struct AllocationProposal {
  AllocationAction current;
  AllocationAction proposed;
  double predicted_gain = 0.0;  // predicted team perf after proposal minus current team perf
};

// A learned allocation policy. Returns an index into feasible_actions(config).
class AllocationPolicy {
 public:
  virtual ~AllocationPolicy() = default;
  virtual std::size_t select(const Observation& obs) const = 0;
};

// Channel masking: the unavailable channel is replaced by a copy of the
// available one, so a policy trained on both channels sees a consistent team.
TeamState mask_channels(const TeamState& state, StrategyKind kind);

PerformanceScore predicted_team_performance(const TeamState& state, const AllocationAction& action,
                                            const HpmParams& hpm, const EnvConfig& config);

// One-step lookahead over every feasible action. Ties go to the smallest total
// view change, then to the lexicographically first action.
AllocationProposal greedy_propose(const TeamState& state, const HpmParams& hpm,
                                  const EnvConfig& config);

class Allocator {
 public:
  Allocator(StrategyKind kind, EnvConfig config, HpmParams hpm,
            std::shared_ptr<const AllocationPolicy> policy = nullptr, bool greedy_fallback = true);

  // Freezes the negotiated split for FixedNegotiated.
  void begin_episode(const TeamState& initial);

  AllocationProposal propose(const TeamState& state, Rng& rng) const;

  StrategyKind kind() const noexcept { return kind_; }
  const std::vector<AllocationAction>& actions() const noexcept { return actions_; }

 private:
  StrategyKind kind_;
  EnvConfig config_;
  HpmParams hpm_;
  std::shared_ptr<const AllocationPolicy> policy_;
  bool greedy_fallback_;
  std::vector<AllocationAction> actions_;
  std::optional<AllocationAction> negotiated_;
};

// Accepted proposals return `proposed`, rejected ones `current`. Interactive
// policies require an explicit decision.
AllocationAction apply_approval(const AllocationProposal& proposal, const ApprovalPolicy& policy,
                                std::optional<bool> decision, Rng& rng);

}  // namespace awac
