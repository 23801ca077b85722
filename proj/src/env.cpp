#include "awac/env.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include <json.hpp>

#include "awac/error.hpp"

namespace awac {

int EnvConfig::resolved_max_views() const noexcept {
  return max_views > 0 ? max_views : total_views - (n_operators - 1) * min_views;
}

void EnvConfig::validate() const {
  if (n_operators < 2) throw ConfigError("env: n_operators must be >= 2");
  if (total_views < n_operators) throw ConfigError("env: total_views must be >= n_operators");
  if (min_views < 0) throw ConfigError("env: min_views must be >= 0");
  const int hi = resolved_max_views();
  if (hi < min_views) throw ConfigError("env: max_views < min_views");
  if (n_operators * min_views > total_views || total_views > n_operators * hi) {
    throw ConfigError("env: view bounds admit no feasible assignment");
  }
  if (sets_per_mission < 1) throw ConfigError("env: sets_per_mission must be >= 1");
  if (!std::isfinite(kappa)) throw ConfigError("env: kappa must be finite");
  if (!(noise_sigma >= 0.0)) throw ConfigError("env: noise_sigma must be >= 0");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("env: gamma must lie in (0,1]");
}

AllocationAction equal_split(const EnvConfig& config) {
  const int n = config.n_operators;
  AllocationAction a{std::vector<int>(static_cast<std::size_t>(n), config.total_views / n)};
  for (int i = 0; i < config.total_views % n; ++i) ++a.views[static_cast<std::size_t>(i)];
  return a;
}

bool is_feasible(const AllocationAction& action, const EnvConfig& config) noexcept {
  if (action.views.size() != static_cast<std::size_t>(config.n_operators)) return false;
  const int hi = config.resolved_max_views();
  int sum = 0;
  for (int v : action.views) {
    if (v < config.min_views || v > hi) return false;
    sum += v;
  }
  return sum == config.total_views;
}

namespace {

void enumerate(const EnvConfig& config, std::vector<int>& prefix, int remaining,
               std::vector<AllocationAction>& out) {
  const int lo = config.min_views;
  const int hi = config.resolved_max_views();
  const int left = config.n_operators - static_cast<int>(prefix.size());
  if (left == 1) {
    if (remaining >= lo && remaining <= hi) {
      prefix.push_back(remaining);
      out.push_back(AllocationAction{prefix});
      prefix.pop_back();
    }
    return;
  }
  for (int v = lo; v <= hi; ++v) {
    const int rest = remaining - v;
    if (rest < (left - 1) * lo) break;
    if (rest > (left - 1) * hi) continue;
    prefix.push_back(v);
    enumerate(config, prefix, rest, out);
    prefix.pop_back();
  }
}

}  // namespace

std::vector<AllocationAction> feasible_actions(const EnvConfig& config) {
  std::vector<AllocationAction> out;
  std::vector<int> prefix;
  prefix.reserve(static_cast<std::size_t>(config.n_operators));
  enumerate(config, prefix, config.total_views, out);
  return out;
}

PerformanceScore evaluate_team(const TeamState& state, const HpmParams& hpm,
                               std::vector<PerformanceScore>* per_operator) {
  std::vector<PerformanceScore> perfs;
  perfs.reserve(state.operators.size());
  for (const auto& op : state.operators) {
    perfs.push_back(operator_performance(op.s_subj, op.s_obj, hpm));
  }
  const PerformanceScore team = team_performance(perfs);
  if (per_operator != nullptr) *per_operator = std::move(perfs);
  return team;
}

TeamState reset(const EnvConfig& config, const HpmParams& hpm, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const AllocationAction split = equal_split(config);
  TeamState state;
  state.operators.resize(static_cast<std::size_t>(config.n_operators));
  for (std::size_t i = 0; i < state.operators.size(); ++i) {
    auto& op = state.operators[i];
    op.s_subj = WorkloadLevel::clamped(uniform01(rng));
    op.s_obj = WorkloadLevel::clamped(uniform01(rng));
    op.views = split.views[i];
  }
  state.team_perf = evaluate_team(state, hpm);
  return state;
}

void apply_transition(TeamState& state, const AllocationAction& action,
                      const EnvConfig& config, const HpmParams& /*hpm*/, Rng& rng) {
  std::normal_distribution<double> noise(0.0, config.noise_sigma > 0.0 ? config.noise_sigma : 1.0);
  for (std::size_t i = 0; i < state.operators.size(); ++i) {
    auto& op = state.operators[i];
    const double dw = config.kappa * static_cast<double>(action.views[i] - op.views);
    double obj = predict_next_state(op.s_obj, dw).value();
    double subj = predict_next_state(op.s_subj, dw).value();
    if (config.noise_sigma > 0.0) {
      obj += noise(rng);
      subj += noise(rng);
    }
    op.s_obj = WorkloadLevel::clamped(obj);
    op.s_subj = WorkloadLevel::clamped(subj);
    op.views = action.views[i];
  }
}

StepResult step(TeamState& state, const AllocationAction& action, const EnvConfig& config,
                const HpmParams& hpm, Rng& rng) {
  if (state.terminated) {
    throw StateError("step called on a terminated episode");
  }
  StepResult result;
  result.info.team_perf_before = state.team_perf;

  if (!is_feasible(action, config)) {
    state.terminated = true;
    result.terminated = true;
    result.reward = 0.0;
    result.info.infeasible = true;
    result.info.team_perf_after = state.team_perf;
    evaluate_team(state, hpm, &result.info.operator_perf);
    result.observation = encode_observation(state, config);
    return result;
  }

  apply_transition(state, action, config, hpm, rng);
  ++state.set_index;
  const PerformanceScore before = state.team_perf;
  const PerformanceScore after = evaluate_team(state, hpm, &result.info.operator_perf);
  state.team_perf = after;

  const bool improved_or_held = after >= before;
  result.reward = improved_or_held ? kStepReward : 0.0;
  state.terminated = !improved_or_held || state.set_index >= config.sets_per_mission;
  result.terminated = state.terminated;
  result.info.team_perf_after = after;
  result.observation = encode_observation(state, config);
  return result;
}

Observation encode_observation(const TeamState& state, const EnvConfig& config) {
  const std::size_t n = state.operators.size();
  Observation obs(3 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& op = state.operators[i];
    obs[i] = op.s_obj.value();
    obs[n + i] = op.s_subj.value();
    obs[2 * n + i] = static_cast<double>(op.views) / static_cast<double>(config.total_views);
  }
  return obs;
}

ObservableFields decode_observation(const Observation& obs, const EnvConfig& config) {
  const std::size_t n = static_cast<std::size_t>(config.n_operators);
  if (obs.size() != 3 * n) throw ConfigError("observation length does not match config");
  ObservableFields f;
  for (std::size_t i = 0; i < n; ++i) {
    f.s_obj.push_back(obs[i]);
    f.s_subj.push_back(obs[n + i]);
    f.views.push_back(static_cast<int>(std::lround(obs[2 * n + i] * config.total_views)));
  }
  return f;
}

ObservableFields observable_fields(const TeamState& state) {
  ObservableFields f;
  for (const auto& op : state.operators) {
    f.s_obj.push_back(op.s_obj.value());
    f.s_subj.push_back(op.s_subj.value());
    f.views.push_back(op.views);
  }
  return f;
}

IsaScore simulate_isa_response(WorkloadLevel s_subj, const IsaBiasModel& bias, Rng& rng) {
  int score = static_cast<int>(std::lround(4.0 * s_subj.value())) - 2;
  if (bias.probability > 0.0 && uniform01(rng) < bias.probability) {
    score += bias.offset;
  }
  return IsaScore{std::clamp(score, -2, 2)};
}

AllocationEnv::AllocationEnv(EnvConfig config, HpmParams hpm)
    : config_(std::move(config)), hpm_(std::move(hpm)) {
  config_.validate();
  hpm_.validate();
  actions_ = feasible_actions(config_);
}

const Observation& AllocationEnv::reset(std::uint64_t seed) {
  state_ = awac::reset(config_, hpm_, seed);
  // Transition noise draws from a stream distinct from the initial-state draw.
  rng_.seed(derive_seed(seed, 1));
  obs_ = encode_observation(state_, config_);
  return obs_;
}

StepResult AllocationEnv::step(const AllocationAction& action) {
  StepResult r = awac::step(state_, action, config_, hpm_, rng_);
  obs_ = r.observation;
  return r;
}

StepResult AllocationEnv::step_index(std::size_t action_index) {
  if (action_index >= actions_.size()) {
    throw ConfigError("action index out of range");
  }
  return step(actions_[action_index]);
}

namespace {

nlohmann::json state_json(const TeamState& state) {
  nlohmann::json ops = nlohmann::json::array();
  for (const auto& op : state.operators) {
    ops.push_back({{"s_subj", op.s_subj.value()}, {"s_obj", op.s_obj.value()}, {"views", op.views}});
  }
  return {{"operators", ops},
          {"set_index", state.set_index},
          {"team_perf", state.team_perf},
          {"terminated", state.terminated}};
}

}  // namespace

EpisodeTraceWriter::EpisodeTraceWriter(std::ostream& out, const EnvConfig& config,
                                       std::uint64_t seed, const TeamState& initial)
    : out_(out) {
  nlohmann::json header = {
      {"type", "header"},
      {"seed", seed},
      {"config",
       {{"n_operators", config.n_operators},
        {"total_views", config.total_views},
        {"min_views", config.min_views},
        {"max_views", config.resolved_max_views()},
        {"sets_per_mission", config.sets_per_mission},
        {"kappa", config.kappa},
        {"noise_sigma", config.noise_sigma},
        {"gamma", config.gamma}}},
      {"state", state_json(initial)}};
  out_ << header.dump() << '\n';
}

void EpisodeTraceWriter::record(const TeamState& state, const AllocationAction& action,
                                const StepResult& result) {
  nlohmann::json line = {{"type", "step"},
                         {"step", step_++},
                         {"action", action.views},
                         {"reward", result.reward},
                         {"terminated", result.terminated},
                         {"infeasible", result.info.infeasible},
                         {"state", state_json(state)}};
  out_ << line.dump() << '\n';
}

}  // namespace awac
