#include "awac/ppo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <numeric>
#include <ostream>
#include <string>


#include "awac/error.hpp"

namespace awac {

AllocationEnvironment::AllocationEnvironment(EnvConfig config, HpmParams hpm)
    : env_(std::move(config), std::move(hpm)) {}

Environment::Step AllocationEnvironment::step(std::size_t action) {
  StepResult r = env_.step_index(action);
  return {std::move(r.observation), r.reward, r.terminated};
}

EnvFactory allocation_env_factory(const EnvConfig& config, const HpmParams& hpm) {
  config.validate();
  hpm.validate();
  return [config, hpm] { return std::make_unique<AllocationEnvironment>(config, hpm); };
}

void PpoConfig::validate() const {
  if (!(clip_eps > 0.0 && clip_eps < 1.0)) throw ConfigError("ppo: clip_eps must lie in (0,1)");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("ppo: gamma must lie in (0,1]");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw ConfigError("ppo: gae_lambda must lie in [0,1]");
  if (!(learning_rate > 0.0)) throw ConfigError("ppo: learning_rate must be > 0");
  if (rollout_steps < 1 || epochs_per_update < 1 || minibatch_size < 1) {
    throw ConfigError("ppo: rollout_steps, epochs_per_update and minibatch_size must be >= 1");
  }
  if (total_steps < 0) throw ConfigError("ppo: total_steps must be >= 0");
  if (num_envs < 1) throw ConfigError("ppo: num_envs must be >= 1");
  if (entropy_coef < 0.0 || value_coef < 0.0) throw ConfigError("ppo: loss coefficients must be >= 0");
  if (checkpoint_every < 0) throw ConfigError("ppo: checkpoint_every must be >= 0");
}

PolicyParams::PolicyParams(int observation_size, int action_count, const std::vector<int>& hidden)
    : actor(observation_size, hidden, action_count),
      critic(observation_size, hidden, 1),
      hidden_(hidden) {}

void PolicyParams::init(Rng& rng) {
  actor.init(rng, 0.01);
  critic.init(rng, 1.0);
}

namespace {

Eigen::MatrixXd as_column(const Observation& obs) {
  return Eigen::Map<const Eigen::VectorXd>(obs.data(), static_cast<Eigen::Index>(obs.size()));
}

}  // namespace

Eigen::VectorXd PolicyParams::log_probabilities(const Observation& obs) const {
  if (static_cast<int>(obs.size()) != observation_size()) {
    throw ConfigError("policy/observation shape mismatch");
  }
  return log_softmax(actor.forward(as_column(obs))).col(0);
}

Eigen::VectorXd PolicyParams::probabilities(const Observation& obs) const {
  return log_probabilities(obs).array().exp();
}

double PolicyParams::value(const Observation& obs) const {
  return critic.forward(as_column(obs))(0, 0);
}

std::size_t PolicyParams::select(const Observation& obs) const {
  const Eigen::VectorXd logits = actor.forward(as_column(obs)).col(0);
  Eigen::Index best = 0;
  logits.maxCoeff(&best);
  return static_cast<std::size_t>(best);
}

bool operator==(const PolicyParams& a, const PolicyParams& b) {
  return a.hidden_ == b.hidden_ && a.actor.layer_sizes() == b.actor.layer_sizes() &&
         a.critic.layer_sizes() == b.critic.layer_sizes() && a.actor.params() == b.actor.params() &&
         a.critic.params() == b.critic.params();
}

std::size_t RolloutBatch::size() const noexcept {
  std::size_t n = 0;
  for (const auto& t : trajectories) n += t.steps.size();
  return n;
}

double clipped_surrogate_loss(std::span<const double> ratios, std::span<const double> advantages,
                              double clip_eps) {
  if (ratios.size() != advantages.size()) throw ConfigError("surrogate: length mismatch");
  if (ratios.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    const double r = ratios[i];
    if (!(r > 0.0)) throw ConfigError("surrogate: ratios must be positive");
    const double a = advantages[i];
    const double clipped = std::clamp(r, 1.0 - clip_eps, 1.0 + clip_eps);
    total += std::min(r * a, clipped * a);
  }
  return -total / static_cast<double>(ratios.size());
}

std::vector<double> compute_advantages(const Trajectory& traj, double gamma, double lambda) {
  const auto& s = traj.steps;
  std::vector<double> adv(s.size(), 0.0);
  double running = 0.0;
  for (std::size_t t = s.size(); t-- > 0;) {
    const bool last = t + 1 == s.size();
    const double nonterminal = s[t].terminated ? 0.0 : 1.0;
    const double next_value = last ? traj.bootstrap_value : s[t + 1].value;
    const double delta = s[t].reward + gamma * next_value * nonterminal - s[t].value;
    running = delta + gamma * lambda * nonterminal * running;
    adv[t] = running;
  }
  return adv;
}

void normalize_advantages(std::span<double> advantages) {
  if (advantages.size() < 2) return;
  const double n = static_cast<double>(advantages.size());
  const double mean = std::accumulate(advantages.begin(), advantages.end(), 0.0) / n;
  double var = 0.0;
  for (double a : advantages) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / n);
  if (!(sd > 1e-12)) {
    for (double& a : advantages) a -= mean;
    return;
  }
  for (double& a : advantages) a = (a - mean) / sd;
}

RolloutCollector::RolloutCollector(EnvFactory factory, int num_envs, std::uint64_t seed) {
  if (num_envs < 1) throw ConfigError("rollout: num_envs must be >= 1");
  workers_.resize(static_cast<std::size_t>(num_envs));
  for (std::size_t w = 0; w < workers_.size(); ++w) {
    auto& worker = workers_[w];
    worker.env = factory();
    worker.rng.seed(derive_seed(seed, w));
    worker.obs = worker.env->reset(worker.rng());
  }
}

int RolloutCollector::observation_size() const { return workers_.front().env->observation_size(); }
int RolloutCollector::action_count() const { return workers_.front().env->action_count(); }

std::int64_t RolloutCollector::share(std::int64_t steps, std::size_t worker) const noexcept {
  const auto n = static_cast<std::int64_t>(workers_.size());
  return steps / n + (static_cast<std::int64_t>(worker) < steps % n ? 1 : 0);
}

void RolloutCollector::run_worker(Worker& w, const PolicyParams& policy, std::int64_t steps,
                                  Trajectory& out, std::vector<double>& returns) const {
  out.steps.clear();
  out.steps.reserve(static_cast<std::size_t>(steps));
  for (std::int64_t i = 0; i < steps; ++i) {
    const Eigen::VectorXd logp = policy.log_probabilities(w.obs);
    const double u = uniform01(w.rng);
    std::size_t action = static_cast<std::size_t>(logp.size() - 1);
    double cumulative = 0.0;
    for (Eigen::Index k = 0; k < logp.size(); ++k) {
      cumulative += std::exp(logp(k));
      if (u < cumulative) {
        action = static_cast<std::size_t>(k);
        break;
      }
    }
    Transition tr;
    tr.observation = w.obs;
    tr.action = action;
    tr.log_prob = logp(static_cast<Eigen::Index>(action));
    tr.value = policy.value(w.obs);
    Environment::Step s = w.env->step(action);
    tr.reward = s.reward;
    tr.terminated = s.done;
    w.episode_return += s.reward;
    if (s.done) {
      returns.push_back(w.episode_return);
      w.episode_return = 0.0;
      w.obs = w.env->reset(w.rng());
    } else {
      w.obs = std::move(s.observation);
    }
    out.steps.push_back(std::move(tr));
  }
  out.bootstrap_value =
      (out.steps.empty() || out.steps.back().terminated) ? 0.0 : policy.value(w.obs);
}

RolloutBatch RolloutCollector::collect(const PolicyParams& policy, std::int64_t steps) {
  if (policy.observation_size() != observation_size() || policy.action_count() != action_count()) {
    throw ConfigError("rollout: policy shape does not match environment");
  }
  const std::size_t n = workers_.size();
  RolloutBatch batch;
  batch.trajectories.resize(n);
  std::vector<std::vector<double>> returns(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t w = 0; w < static_cast<std::ptrdiff_t>(n); ++w) {
    const auto i = static_cast<std::size_t>(w);
    run_worker(workers_[i], policy, share(steps, i), batch.trajectories[i], returns[i]);
  }
  for (auto& r : returns) {
    batch.completed_returns.insert(batch.completed_returns.end(), r.begin(), r.end());
  }
  return batch;
}

RolloutBatch RolloutCollector::collect_serial(const PolicyParams& policy, std::int64_t steps) {
  if (policy.observation_size() != observation_size() || policy.action_count() != action_count()) {
    throw ConfigError("rollout: policy shape does not match environment");
  }
  RolloutBatch batch;
  batch.trajectories.resize(workers_.size());
  for (std::size_t i = 0; i < workers_.size(); ++i) {
    std::vector<double> returns;
    run_worker(workers_[i], policy, share(steps, i), batch.trajectories[i], returns);
    batch.completed_returns.insert(batch.completed_returns.end(), returns.begin(), returns.end());
  }
  return batch;
}

LossStats actor_loss(const Mlp& actor, const MinibatchView& batch, double clip_eps,
                     double entropy_coef, Eigen::VectorXd* grad) {
  Mlp::Cache cache;
  const Eigen::MatrixXd logits = actor.forward(batch.observations, cache);
  const Eigen::MatrixXd logp = log_softmax(logits);
  const Eigen::Index n = logits.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  Eigen::MatrixXd grad_logits = Eigen::MatrixXd::Zero(logits.rows(), n);
  LossStats stats;
  for (Eigen::Index b = 0; b < n; ++b) {
    const auto a = static_cast<Eigen::Index>(batch.actions[static_cast<std::size_t>(b)]);
    const double lp = logp(a, b);
    const double log_ratio = lp - batch.old_log_probs(b);
    const double r = std::exp(log_ratio);
    const double adv = batch.advantages(b);
    const double s1 = r * adv;
    const double s2 = std::clamp(r, 1.0 - clip_eps, 1.0 + clip_eps) * adv;
    stats.policy_loss -= std::min(s1, s2);
    if (std::abs(r - 1.0) > clip_eps) stats.clip_fraction += 1.0;
    stats.approx_kl += (r - 1.0) - log_ratio;

    const Eigen::VectorXd p = logp.col(b).array().exp();
    const double h = -(p.array() * logp.col(b).array()).sum();
    stats.entropy += h;

    // d(-min(s1,s2))/dlogp is -r*A on the unclipped branch, 0 on the flat clipped one.
    const double dlogp = s1 <= s2 ? -r * adv : 0.0;
    Eigen::VectorXd g = -dlogp * p;
    g(a) += dlogp;
    g.array() += entropy_coef * p.array() * (logp.col(b).array() + h);
    grad_logits.col(b) = g * inv_n;
  }
  stats.policy_loss *= inv_n;
  stats.entropy *= inv_n;
  stats.clip_fraction *= inv_n;
  stats.approx_kl *= inv_n;
  if (grad != nullptr) {
    *grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(actor.num_params()));
    actor.backward(cache, grad_logits, *grad);
  }
  return stats;
}

LossStats critic_loss(const Mlp& critic, const MinibatchView& batch, double value_coef,
                      Eigen::VectorXd* grad) {
  Mlp::Cache cache;
  const Eigen::MatrixXd values = critic.forward(batch.observations, cache);
  const Eigen::RowVectorXd diff = values.row(0) - batch.returns.transpose();
  const double n = static_cast<double>(diff.size());
  LossStats stats;
  stats.value_loss = diff.squaredNorm() / n;
  if (grad != nullptr) {
    *grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(critic.num_params()));
    const Eigen::MatrixXd grad_out = (2.0 * value_coef / n) * diff;
    critic.backward(cache, grad_out, *grad);
  }
  return stats;
}

void TrainReport::write_csv(std::ostream& out) const {
  out << "update,steps,mean_episode_reward,episodes,policy_loss,value_loss,entropy,clip_fraction,"
         "approx_kl\n";
  char line[512];
  for (const auto& u : updates) {
    std::snprintf(line, sizeof line, "%d,%lld,%.10g,%d,%.10g,%.10g,%.10g,%.10g,%.10g\n", u.update,
                  static_cast<long long>(u.steps), u.mean_episode_reward, u.episodes,
                  u.policy_loss, u.value_loss, u.entropy, u.clip_fraction, u.approx_kl);
    out << line;
  }
}

namespace {

struct FlatBatch {
  Eigen::MatrixXd observations;
  std::vector<std::size_t> actions;
  Eigen::VectorXd log_probs;
  Eigen::VectorXd advantages;
  Eigen::VectorXd returns;
};

FlatBatch flatten(const RolloutBatch& batch, int obs_size, double gamma, double lambda) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  FlatBatch flat;
  flat.observations.resize(obs_size, n);
  flat.actions.reserve(static_cast<std::size_t>(n));
  flat.log_probs.resize(n);
  flat.advantages.resize(n);
  flat.returns.resize(n);
  Eigen::Index col = 0;
  for (const auto& traj : batch.trajectories) {
    const std::vector<double> adv = compute_advantages(traj, gamma, lambda);
    for (std::size_t t = 0; t < traj.steps.size(); ++t, ++col) {
      const auto& s = traj.steps[t];
      flat.observations.col(col) = as_column(s.observation);
      flat.actions.push_back(s.action);
      flat.log_probs(col) = s.log_prob;
      flat.advantages(col) = adv[t];
      flat.returns(col) = adv[t] + s.value;
    }
  }
  normalize_advantages(std::span<double>(flat.advantages.data(), static_cast<std::size_t>(n)));
  return flat;
}

MinibatchView gather(const FlatBatch& flat, std::span<const std::size_t> idx) {
  const auto m = static_cast<Eigen::Index>(idx.size());
  MinibatchView mb;
  mb.observations.resize(flat.observations.rows(), m);
  mb.old_log_probs.resize(m);
  mb.advantages.resize(m);
  mb.returns.resize(m);
  mb.actions.reserve(idx.size());
  for (Eigen::Index j = 0; j < m; ++j) {
    const auto i = static_cast<Eigen::Index>(idx[static_cast<std::size_t>(j)]);
    mb.observations.col(j) = flat.observations.col(i);
    mb.actions.push_back(flat.actions[static_cast<std::size_t>(i)]);
    mb.old_log_probs(j) = flat.log_probs(i);
    mb.advantages(j) = flat.advantages(i);
    mb.returns(j) = flat.returns(i);
  }
  return mb;
}

}  // namespace

TrainResult train(const EnvFactory& factory, const PpoConfig& config,
                  const CheckpointHook& on_checkpoint) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  Rng rng(config.seed);
  RolloutCollector collector(factory, config.num_envs, derive_seed(config.seed, 1));

  TrainResult result;
  result.policy = PolicyParams(collector.observation_size(), collector.action_count(),
                               config.hidden_sizes);
  result.policy.init(rng);
  PolicyParams& policy = result.policy;

  AdamOptimizer actor_opt(policy.actor.num_params(), config.learning_rate);
  AdamOptimizer critic_opt(policy.critic.num_params(), config.learning_rate);

  std::deque<double> recent;
  std::int64_t done = 0;
  int update = 0;
  while (done < config.total_steps) {
    const std::int64_t n = std::min<std::int64_t>(config.rollout_steps, config.total_steps - done);
    const RolloutBatch batch = collector.collect(policy, n);
    done += n;
    for (double r : batch.completed_returns) {
      recent.push_back(r);
      if (recent.size() > 100) recent.pop_front();
    }

    const FlatBatch flat = flatten(batch, collector.observation_size(), config.gamma,
                                   config.gae_lambda);
    std::vector<std::size_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), std::size_t{0});

    LossStats sum;
    int minibatches = 0;
    Eigen::VectorXd actor_grad;
    Eigen::VectorXd critic_grad;
    for (int epoch = 0; epoch < config.epochs_per_update; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t lo = 0; lo < order.size(); lo += static_cast<std::size_t>(config.minibatch_size)) {
        const std::size_t hi = std::min(order.size(), lo + static_cast<std::size_t>(config.minibatch_size));
        const MinibatchView mb = gather(flat, std::span<const std::size_t>(order).subspan(lo, hi - lo));
        const LossStats a = actor_loss(policy.actor, mb, config.clip_eps, config.entropy_coef, &actor_grad);
        const LossStats c = critic_loss(policy.critic, mb, config.value_coef, &critic_grad);
        const double norm = std::sqrt(actor_grad.squaredNorm() + critic_grad.squaredNorm());
        if (!std::isfinite(norm)) {
          throw NumericError("non-finite gradient at update " + std::to_string(update));
        }
        if (config.max_grad_norm > 0.0 && norm > config.max_grad_norm) {
          const double scale = config.max_grad_norm / norm;
          actor_grad *= scale;
          critic_grad *= scale;
        }
        actor_opt.step(policy.actor.params(), actor_grad);
        critic_opt.step(policy.critic.params(), critic_grad);
        sum.policy_loss += a.policy_loss;
        sum.entropy += a.entropy;
        sum.clip_fraction += a.clip_fraction;
        sum.approx_kl += a.approx_kl;
        sum.value_loss += c.value_loss;
        ++minibatches;
      }
    }
    if (!policy.all_finite()) {
      throw NumericError("NaN/Inf in policy weights after update " + std::to_string(update));
    }

    UpdateMetrics m;
    m.update = update;
    m.steps = done;
    m.episodes = static_cast<int>(batch.completed_returns.size());
    m.mean_episode_reward =
        recent.empty() ? 0.0
                       : std::accumulate(recent.begin(), recent.end(), 0.0) /
                             static_cast<double>(recent.size());
    const double k = minibatches > 0 ? 1.0 / minibatches : 0.0;
    m.policy_loss = sum.policy_loss * k;
    m.value_loss = sum.value_loss * k;
    m.entropy = sum.entropy * k;
    m.clip_fraction = sum.clip_fraction * k;
    m.approx_kl = sum.approx_kl * k;
    result.report.updates.push_back(m);
    ++update;
    if (on_checkpoint && config.checkpoint_every > 0 && update % config.checkpoint_every == 0) {
      on_checkpoint(policy, update);
    }
  }
  result.report.trailing_mean_reward =
      recent.empty() ? 0.0
                     : std::accumulate(recent.begin(), recent.end(), 0.0) /
                           static_cast<double>(recent.size());
  result.report.wall_clock_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

TrainResult train(const EnvConfig& env_config, const PpoConfig& config, const HpmParams& hpm,
                  const CheckpointHook& on_checkpoint) {
  return train(allocation_env_factory(env_config, hpm), config, on_checkpoint);
}

}  // namespace awac
