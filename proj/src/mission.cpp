#include "awac/mission.hpp"

#include <cctype>

#include "awac/error.hpp"

namespace awac {

namespace {

constexpr std::uint64_t kInitialStream = 0;
constexpr std::uint64_t kTransitionStream = 11;
constexpr std::uint64_t kIsaStream = 12;
constexpr std::uint64_t kChoiceStream = 13;

template <bool Parallel>
TrialMatrix run_bench(const MissionConfig& config, const std::vector<BenchStrategy>& strategies,
                      int teams, std::uint64_t seed) {
  if (strategies.size() < 2) throw ConfigError("bench needs at least 2 strategies");
  if (teams < 2) throw ConfigError("bench needs at least 2 teams");
  config.env.validate();
  config.hpm.validate();
  const std::size_t cols = strategies.size();
  std::vector<double> cells(static_cast<std::size_t>(teams) * cols);
#pragma omp parallel for schedule(static) if (Parallel)
  for (int team = 0; team < teams; ++team) {
    const std::uint64_t team_seed = derive_seed(seed, static_cast<std::uint64_t>(team));
    for (std::size_t c = 0; c < cols; ++c) {
      cells[static_cast<std::size_t>(team) * cols + c] = simulate_mission(config, strategies[c], team_seed).raw_score;
    }
  }
  std::vector<std::string> rows;
  std::vector<std::string> labels;
  for (int team = 0; team < teams; ++team) rows.push_back("T" + std::to_string(team + 1));
  for (const auto& s : strategies) labels.push_back(s.label);
  return TrialMatrix(std::move(rows), std::move(labels), std::move(cells));
}

}  // namespace

BenchStrategy parse_bench_strategy(const std::string& token) {
  if (token.size() == 1 && std::isalpha(static_cast<unsigned char>(token[0]))) {
    const char letter = static_cast<char>(std::toupper(static_cast<unsigned char>(token[0])));
    return {std::string(1, letter), task_spec(letter)};
  }
  const StrategyKind kind = parse_strategy(token);
  // Named adaptive strategies run without an approval session.
  for (const TaskSpec& t : task_matrix()) {
    if (t.strategy == kind && (t.fixed || !t.approval_session)) {
      return {token, t};
    }
  }
  TaskSpec custom;
  custom.letter = '?';
  custom.strategy = kind;
  return {token, custom};
}

MissionResult simulate_mission(const MissionConfig& config, const BenchStrategy& strategy,
                               std::uint64_t team_seed) {
  const EnvConfig& env = config.env;
  const TaskSpec& task = strategy.task;
  TeamState state = reset(env, config.hpm, derive_seed(team_seed, kInitialStream));
  Rng transition_rng(derive_seed(team_seed, kTransitionStream));
  Rng isa_rng(derive_seed(team_seed, kIsaStream));
  Rng choice_rng(derive_seed(team_seed, kChoiceStream));

  Allocator allocator(task.strategy, env, config.hpm, config.policy, true);
  allocator.begin_episode(state);
  if (task.strategy == StrategyKind::kFixedNegotiated) {
    const AllocationAction negotiated = allocator.propose(state, choice_rng).proposed;
    apply_transition(state, negotiated, env, config.hpm, transition_rng);
  }
  const ApprovalPolicy approval =
      task.approval_session ? ApprovalPolicy::simulated(config.accept_probability) : ApprovalPolicy::none();

  MissionResult out;
  for (int set = 1; set <= env.sets_per_mission; ++set) {
    state.set_index = set - 1;
    state.team_perf = evaluate_team(state, config.hpm);
    out.set_perf.push_back(state.team_perf);
    std::vector<int> views;
    for (const auto& op : state.operators) views.push_back(op.views);
    out.set_views.push_back(std::move(views));
    if (set == env.sets_per_mission || task.fixed) continue;

    // What the allocator sees: quantized self-reports and the predictor's estimate.
    TeamState observed = state;
    for (auto& op : observed.operators) {
      op.s_subj = isa_to_workload(simulate_isa_response(op.s_subj, config.isa_bias, isa_rng));
    }
    observed.team_perf = evaluate_team(observed, config.hpm);
    const AllocationProposal proposal = allocator.propose(observed, choice_rng);
    const AllocationAction action = apply_approval(proposal, approval, std::nullopt, choice_rng);
    apply_transition(state, action, env, config.hpm, transition_rng);
  }
  double sum = 0.0;
  for (double p : out.set_perf) sum += p;
  out.raw_score = 100.0 * sum / static_cast<double>(out.set_perf.size());
  return out;
}

TrialMatrix simulate_bench(const MissionConfig& config, const std::vector<BenchStrategy>& strategies,
                           int teams, std::uint64_t seed) {
  return run_bench<true>(config, strategies, teams, seed);
}

TrialMatrix simulate_bench_serial(const MissionConfig& config,
                                  const std::vector<BenchStrategy>& strategies, int teams,
                                  std::uint64_t seed) {
  return run_bench<false>(config, strategies, teams, seed);
}

}  // namespace awac
