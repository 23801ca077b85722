#include "awac/allocator.hpp"

#include <cmath>
#include <cstdlib>
#include <string>

#include "awac/error.hpp"

namespace awac {

namespace {

struct StrategyName {
  StrategyKind kind;
  std::string_view name;
};

constexpr StrategyName kStrategyNames[] = {
    {StrategyKind::kFixedEqual, "FixedEqual"},   {StrategyKind::kFixedNegotiated, "FixedNegotiated"},
    {StrategyKind::kRandom, "Random"},           {StrategyKind::kAwacIS, "AwacIS"},
    {StrategyKind::kAwacPS, "AwacPS"},           {StrategyKind::kAwacISPS, "AwacISPS"},
};

constexpr double kTieTolerance = 1e-12;

int total_change(const AllocationAction& a, const TeamState& state) {
  int change = 0;
  for (std::size_t i = 0; i < a.views.size(); ++i) {
    change += std::abs(a.views[i] - state.operators[i].views);
  }
  return change;
}

AllocationAction current_action(const TeamState& state) {
  AllocationAction a;
  for (const auto& op : state.operators) a.views.push_back(op.views);
  return a;
}

}  // namespace

std::string_view to_string(StrategyKind kind) noexcept {
  for (const auto& s : kStrategyNames) {
    if (s.kind == kind) return s.name;
  }
  return "?";
}

StrategyKind parse_strategy(std::string_view name) {
  for (const auto& s : kStrategyNames) {
    if (s.name == name) return s.kind;
  }
  throw ConfigError("unknown strategy '" + std::string(name) + "'");
}

bool uses_subjective(StrategyKind kind) noexcept {
  return kind == StrategyKind::kAwacIS || kind == StrategyKind::kAwacISPS;
}

bool uses_objective(StrategyKind kind) noexcept {
  return kind == StrategyKind::kAwacPS || kind == StrategyKind::kAwacISPS;
}

const std::vector<TaskSpec>& task_matrix() {
  //                                 fixed   IS     PS     AS
  static const std::vector<TaskSpec> kTasks = {
      {'A', true, false, false, false, StrategyKind::kFixedEqual},
      {'B', true, false, false, true, StrategyKind::kFixedNegotiated},
      {'C', false, true, false, true, StrategyKind::kAwacIS},
      {'D', false, true, false, false, StrategyKind::kAwacIS},
      {'E', false, false, true, true, StrategyKind::kAwacPS},
      {'F', false, false, true, false, StrategyKind::kAwacPS},
      {'G', false, true, true, true, StrategyKind::kAwacISPS},
      {'H', false, true, true, false, StrategyKind::kAwacISPS},
  };
  return kTasks;
}

TaskSpec task_spec(char letter) {
  for (const auto& t : task_matrix()) {
    if (t.letter == letter) return t;
  }
  throw ConfigError(std::string("unknown task '") + letter + "'");
}

ApprovalPolicy ApprovalPolicy::simulated(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("approval probability must lie in [0,1]");
  return {Kind::kSimulated, p};
}

TeamState mask_channels(const TeamState& state, StrategyKind kind) {
  TeamState masked = state;
  if (kind == StrategyKind::kAwacIS) {
    for (auto& op : masked.operators) op.s_obj = op.s_subj;
  } else if (kind == StrategyKind::kAwacPS) {
    for (auto& op : masked.operators) op.s_subj = op.s_obj;
  }
  return masked;
}

PerformanceScore predicted_team_performance(const TeamState& state, const AllocationAction& action,
                                            const HpmParams& hpm, const EnvConfig& config) {
  double sum = 0.0;
  for (std::size_t i = 0; i < state.operators.size(); ++i) {
    const auto& op = state.operators[i];
    const double dw = config.kappa * static_cast<double>(action.views[i] - op.views);
    sum += predict_next_performance(op.s_subj, op.s_obj, dw, hpm);
  }
  return sum / static_cast<double>(state.operators.size());
}

AllocationProposal greedy_propose(const TeamState& state, const HpmParams& hpm,
                                  const EnvConfig& config) {
  const auto actions = feasible_actions(config);
  const AllocationAction* best = nullptr;
  double best_perf = 0.0;
  int best_change = 0;
  for (const auto& a : actions) {
    const double perf = predicted_team_performance(state, a, hpm, config);
    const int change = total_change(a, state);
    if (best == nullptr || perf > best_perf + kTieTolerance ||
        (std::abs(perf - best_perf) <= kTieTolerance && change < best_change)) {
      best = &a;
      best_perf = perf;
      best_change = change;
    }
  }
  return AllocationProposal{current_action(state), *best, best_perf - evaluate_team(state, hpm)};
}

Allocator::Allocator(StrategyKind kind, EnvConfig config, HpmParams hpm,
                     std::shared_ptr<const AllocationPolicy> policy, bool greedy_fallback)
    : kind_(kind),
      config_(std::move(config)),
      hpm_(std::move(hpm)),
      policy_(std::move(policy)),
      greedy_fallback_(greedy_fallback) {
  config_.validate();
  actions_ = feasible_actions(config_);
  const bool awac = uses_subjective(kind_) || uses_objective(kind_);
  if (awac && policy_ == nullptr && !greedy_fallback_) {
    throw ConfigError(std::string(to_string(kind_)) + " needs a trained policy");
  }
}

void Allocator::begin_episode(const TeamState& initial) {
  if (kind_ == StrategyKind::kFixedNegotiated) {
    negotiated_ = greedy_propose(initial, hpm_, config_).proposed;
  }
}

AllocationProposal Allocator::propose(const TeamState& state, Rng& rng) const {
  AllocationProposal p;
  p.current = current_action(state);
  switch (kind_) {
    case StrategyKind::kFixedEqual:
      p.proposed = equal_split(config_);
      break;
    case StrategyKind::kFixedNegotiated:
      if (!negotiated_) throw StateError("FixedNegotiated used before begin_episode");
      p.proposed = *negotiated_;
      break;
    case StrategyKind::kRandom: {
      std::uniform_int_distribution<std::size_t> pick(0, actions_.size() - 1);
      p.proposed = actions_[pick(rng)];
      break;
    }
    case StrategyKind::kAwacIS:
    case StrategyKind::kAwacPS:
    case StrategyKind::kAwacISPS: {
      const TeamState masked = mask_channels(state, kind_);
      if (policy_ != nullptr) {
        const std::size_t idx = policy_->select(encode_observation(masked, config_));
        if (idx >= actions_.size()) throw ConfigError("policy returned an out-of-range action");
        p.proposed = actions_[idx];
      } else {
        p.proposed = greedy_propose(masked, hpm_, config_).proposed;
      }
      p.predicted_gain = predicted_team_performance(masked, p.proposed, hpm_, config_) -
                         evaluate_team(masked, hpm_);
      return p;
    }
  }
  p.predicted_gain = predicted_team_performance(state, p.proposed, hpm_, config_) -
                     evaluate_team(state, hpm_);
  return p;
}

AllocationAction apply_approval(const AllocationProposal& proposal, const ApprovalPolicy& policy,
                                std::optional<bool> decision, Rng& rng) {
  switch (policy.kind) {
    case ApprovalPolicy::Kind::kNone:
      return proposal.proposed;
    case ApprovalPolicy::Kind::kSimulated:
      return uniform01(rng) < policy.accept_prob ? proposal.proposed : proposal.current;
    case ApprovalPolicy::Kind::kInteractive:
      if (!decision) throw StateError("interactive approval requires a decision");
      return *decision ? proposal.proposed : proposal.current;
  }
  return proposal.current;
}

}  // namespace awac
