#include "awac/evaluate.hpp"

#include <cmath>

#include "awac/checkpoint.hpp"
#include "awac/error.hpp"

namespace awac {

namespace {

constexpr std::uint64_t kChoiceStream = 7;

std::size_t sample_index(const Eigen::VectorXd& probs, Rng& rng) {
  const double u = uniform01(rng);
  double cumulative = 0.0;
  for (Eigen::Index k = 0; k < probs.size(); ++k) {
    cumulative += probs(k);
    if (u < cumulative) return static_cast<std::size_t>(k);
  }
  return static_cast<std::size_t>(probs.size() - 1);
}

ActionChooser policy_chooser(const PolicyParams& policy, const std::vector<AllocationAction>& actions,
                             ActionSelection mode) {
  return [&policy, &actions, mode](const TeamState&, const Observation& obs, Rng& rng) {
    const std::size_t idx = mode == ActionSelection::kGreedy
                                ? policy.select(obs)
                                : sample_index(policy.probabilities(obs), rng);
    return actions[idx];
  };
}

template <typename MakeChooser>
std::vector<EpisodeRecord> run_all(const EnvConfig& config, const HpmParams& hpm,
                                   std::int64_t episodes, std::uint64_t seed,
                                   const MakeChooser& make, bool parallel) {
  if (episodes < 0) throw ConfigError("episode count must be >= 0");
  config.validate();
  hpm.validate();
  std::vector<EpisodeRecord> out(static_cast<std::size_t>(episodes));
  if (parallel) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < episodes; ++i) {
      out[static_cast<std::size_t>(i)] = run_episode(config, hpm, episode_seed(seed, i), make());
    }
  } else {
    for (std::int64_t i = 0; i < episodes; ++i) {
      out[static_cast<std::size_t>(i)] = run_episode(config, hpm, episode_seed(seed, i), make());
    }
  }
  return out;
}

}  // namespace

std::uint64_t episode_seed(std::uint64_t seed, std::int64_t episode) noexcept {
  return derive_seed(seed, static_cast<std::uint64_t>(episode));
}

EpisodeRecord run_episode(const EnvConfig& config, const HpmParams& hpm, std::uint64_t seed,
                          const ActionChooser& choose) {
  AllocationEnv env(config, hpm);
  Observation obs = env.reset(seed);
  Rng choice_rng(derive_seed(seed, kChoiceStream));
  EpisodeRecord rec;
  rec.seed = seed;
  rec.initial_perf = env.state().team_perf;
  while (!env.state().terminated) {
    const AllocationAction action = choose(env.state(), obs, choice_rng);
    StepResult r = env.step(action);
    rec.episode_return += r.reward;
    ++rec.steps;
    obs = std::move(r.observation);
  }
  rec.final_perf = env.state().team_perf;
  return rec;
}

std::vector<EpisodeRecord> evaluate_policy(const PolicyParams& policy, const EnvConfig& config,
                                           const HpmParams& hpm, std::int64_t episodes,
                                           std::uint64_t seed, ActionSelection mode) {
  const auto actions = feasible_actions(config);
  check_policy_shape(policy, config);
  return run_all(config, hpm, episodes, seed,
                 [&] { return policy_chooser(policy, actions, mode); }, true);
}

std::vector<EpisodeRecord> evaluate_policy_serial(const PolicyParams& policy,
                                                  const EnvConfig& config, const HpmParams& hpm,
                                                  std::int64_t episodes, std::uint64_t seed,
                                                  ActionSelection mode) {
  const auto actions = feasible_actions(config);
  check_policy_shape(policy, config);
  return run_all(config, hpm, episodes, seed,
                 [&] { return policy_chooser(policy, actions, mode); }, false);
}

namespace {

ActionChooser strategy_chooser(const Allocator& prototype) {
  auto allocator = std::make_shared<Allocator>(prototype);
  auto started = std::make_shared<bool>(false);
  return [allocator, started](const TeamState& state, const Observation&, Rng& rng) {
    if (!*started) {
      allocator->begin_episode(state);
      *started = true;
    }
    return allocator->propose(state, rng).proposed;
  };
}

}  // namespace

std::vector<EpisodeRecord> evaluate_strategy(const Allocator& allocator, const EnvConfig& config,
                                             const HpmParams& hpm, std::int64_t episodes,
                                             std::uint64_t seed) {
  return run_all(config, hpm, episodes, seed, [&] { return strategy_chooser(allocator); }, true);
}

std::vector<EpisodeRecord> evaluate_strategy_serial(const Allocator& allocator,
                                                    const EnvConfig& config, const HpmParams& hpm,
                                                    std::int64_t episodes, std::uint64_t seed) {
  return run_all(config, hpm, episodes, seed, [&] { return strategy_chooser(allocator); }, false);
}

}  // namespace awac
