#pragma once

// Proximal policy optimization for the discrete allocation policy: rollout
// collection over auto-resetting environments, GAE advantages, and clipped
// surrogate updates.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include "awac/allocator.hpp"
#include "awac/env.hpp"
#include "awac/mlp.hpp"

namespace awac {

// Discrete-action environment seen by the trainer.
class Environment {
 public:
  struct Step {
    Observation observation;
    double reward = 0.0;
    bool done = false;
  };

  virtual ~Environment() = default;
  virtual int observation_size() const = 0;
  virtual int action_count() const = 0;
  virtual Observation reset(std::uint64_t seed) = 0;
  virtual Step step(std::size_t action) = 0;
};

using EnvFactory = std::function<std::unique_ptr<Environment>()>;

// The allocation POMDP behind the Environment interface; action ids index
// feasible_actions(config), so infeasible assignments are never offered.
class AllocationEnvironment final : public Environment {
 public:
  AllocationEnvironment(EnvConfig config, HpmParams hpm);
  int observation_size() const override { return env_.observation_size(); }
  int action_count() const override { return static_cast<int>(env_.actions().size()); }
  Observation reset(std::uint64_t seed) override { return env_.reset(seed); }
  Step step(std::size_t action) override;

  const AllocationEnv& inner() const noexcept { return env_; }

 private:
  AllocationEnv env_;
};

EnvFactory allocation_env_factory(const EnvConfig& config, const HpmParams& hpm);

struct PpoConfig {
  double clip_eps = 0.2;
  double learning_rate = 3e-4;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  int rollout_steps = 2048;
  int epochs_per_update = 10;
  int minibatch_size = 64;
  std::int64_t total_steps = 100'000;
  std::vector<int> hidden_sizes = {64, 64};
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double max_grad_norm = 0.5;
  int num_envs = 8;             // parallel rollout workers
  int checkpoint_every = 0;     // updates between checkpoints; 0 disables
  std::uint64_t seed = 0;

  void validate() const;
};

// Actor (logits over the action set) and critic (scalar value) networks.
class PolicyParams final : public AllocationPolicy {
 public:
  PolicyParams() = default;
  PolicyParams(int observation_size, int action_count, const std::vector<int>& hidden);

  void init(Rng& rng);

  int observation_size() const noexcept { return actor.inputs(); }
  int action_count() const noexcept { return actor.outputs(); }
  const std::vector<int>& hidden_sizes() const noexcept { return hidden_; }

  // Action probabilities for one observation; sums to 1.
  Eigen::VectorXd probabilities(const Observation& obs) const;
  Eigen::VectorXd log_probabilities(const Observation& obs) const;
  double value(const Observation& obs) const;

  // Greedy (argmax) action; first index wins ties.
  std::size_t select(const Observation& obs) const override;

  bool all_finite() const noexcept { return actor.all_finite() && critic.all_finite(); }

  friend bool operator==(const PolicyParams& a, const PolicyParams& b);

  Mlp actor;
  Mlp critic;

 private:
  std::vector<int> hidden_;
};

struct Transition {
  Observation observation;
  std::size_t action = 0;
  double log_prob = 0.0;
  double reward = 0.0;
  double value = 0.0;
  bool terminated = false;
};

// One worker's contiguous slice of experience. `bootstrap_value` is V(s) of the
// observation following the last record (0 when that record terminated).
struct Trajectory {
  std::vector<Transition> steps;
  double bootstrap_value = 0.0;
};

struct RolloutBatch {
  std::vector<Trajectory> trajectories;
  std::vector<double> completed_returns;  // undiscounted returns of episodes that ended

  std::size_t size() const noexcept;
};

// Objective of the clipped surrogate, negated for minimization:
// -mean(min(r*A, clip(r, 1-eps, 1+eps)*A)).
double clipped_surrogate_loss(std::span<const double> ratios, std::span<const double> advantages,
                              double clip_eps);

// GAE(gamma, lambda) advantages, not normalized.
std::vector<double> compute_advantages(const Trajectory& traj, double gamma, double lambda);

// In place: zero mean, unit (population) variance. No-op on degenerate input.
void normalize_advantages(std::span<double> advantages);

// Auto-resetting parallel environments. Worker w owns env w and a generator
// seeded from (seed, w); the batch is identical for any thread count.
class RolloutCollector {
 public:
  RolloutCollector(EnvFactory factory, int num_envs, std::uint64_t seed);

  // Exactly `steps` transitions split across workers (lower-index workers take
  // the remainder). Actions are sampled from the policy's categorical head.
  RolloutBatch collect(const PolicyParams& policy, std::int64_t steps);
  RolloutBatch collect_serial(const PolicyParams& policy, std::int64_t steps);

  int observation_size() const;
  int action_count() const;
  int num_envs() const noexcept { return static_cast<int>(workers_.size()); }

 private:
  struct Worker {
    std::unique_ptr<Environment> env;
    Rng rng;
    Observation obs;
    double episode_return = 0.0;
  };

  void run_worker(Worker& w, const PolicyParams& policy, std::int64_t steps, Trajectory& out,
                  std::vector<double>& returns) const;
  std::int64_t share(std::int64_t steps, std::size_t worker) const noexcept;

  std::vector<Worker> workers_;
};

struct MinibatchView {
  Eigen::MatrixXd observations;  // obs x B
  std::vector<std::size_t> actions;
  Eigen::VectorXd old_log_probs;
  Eigen::VectorXd advantages;
  Eigen::VectorXd returns;
};

struct LossStats {
  double policy_loss = 0.0;  // clipped surrogate (negated)
  double entropy = 0.0;
  double value_loss = 0.0;   // mean squared error, unscaled
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
};

// Actor loss = surrogate - entropy_coef * entropy; writes its gradient into `grad`.
LossStats actor_loss(const Mlp& actor, const MinibatchView& batch, double clip_eps,
                     double entropy_coef, Eigen::VectorXd* grad);
// Critic loss = value_coef * MSE; writes its gradient into `grad`.
LossStats critic_loss(const Mlp& critic, const MinibatchView& batch, double value_coef,
                      Eigen::VectorXd* grad);

struct UpdateMetrics {
  int update = 0;
  std::int64_t steps = 0;
  double mean_episode_reward = 0.0;
  int episodes = 0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
};

struct TrainReport {
  std::vector<UpdateMetrics> updates;
  double trailing_mean_reward = 0.0;  // mean return of the last <= 100 finished episodes
  double wall_clock_s = 0.0;

  void write_csv(std::ostream& out) const;
};

struct TrainResult {
  PolicyParams policy;
  TrainReport report;
};

using CheckpointHook = std::function<void(const PolicyParams&, int update)>;

TrainResult train(const EnvFactory& factory, const PpoConfig& config,
                  const CheckpointHook& on_checkpoint = {});
TrainResult train(const EnvConfig& env_config, const PpoConfig& config, const HpmParams& hpm,
                  const CheckpointHook& on_checkpoint = {});

}  // namespace awac
