#include <doctest.h>

#include <cmath>
#include <numeric>

#include "awac/error.hpp"
#include "awac/mlp.hpp"
#include "awac/ppo.hpp"
#include "bandit_env.hpp"

using namespace awac;

namespace {

Eigen::MatrixXd random_inputs(int rows, int cols, Rng& rng) {
  Eigen::MatrixXd x(rows, cols);
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = 2.0 * uniform01(rng) - 1.0;
  return x;
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1e-8, std::abs(a), std::abs(b)});
}

// Central differences on every parameter; returns the worst relative error.
template <typename Loss>
double worst_gradient_error(Mlp& net, const Eigen::VectorXd& analytic, Loss loss) {
  const double h = 1e-6;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < net.params().size(); ++i) {
    const double keep = net.params()(i);
    net.params()(i) = keep + h;
    const double up = loss();
    net.params()(i) = keep - h;
    const double down = loss();
    net.params()(i) = keep;
    const double numeric = (up - down) / (2.0 * h);
    if (std::abs(numeric) < 1e-9 && std::abs(analytic(i)) < 1e-9) continue;
    worst = std::max(worst, rel_err(numeric, analytic(i)));
  }
  return worst;
}

MinibatchView small_batch(const Mlp& actor, Rng& rng, int batch) {
  MinibatchView mb;
  mb.observations = random_inputs(actor.inputs(), batch, rng);
  const Eigen::MatrixXd logp = log_softmax(actor.forward(mb.observations));
  mb.old_log_probs.resize(batch);
  mb.advantages.resize(batch);
  mb.returns.resize(batch);
  for (int b = 0; b < batch; ++b) {
    const auto a = static_cast<std::size_t>(b % actor.outputs());
    mb.actions.push_back(a);
    // Ratios within roughly [0.93, 1.07]: well inside a 0.2 clip range.
    mb.old_log_probs(b) = logp(static_cast<Eigen::Index>(a), b) + 0.07 * (2.0 * uniform01(rng) - 1.0);
    mb.advantages(b) = 2.0 * uniform01(rng) - 1.0;
    mb.returns(b) = uniform01(rng);
  }
  return mb;
}

}  // namespace

TEST_CASE("mlp: parameter count and forward shape") {
  Mlp net(3, {5, 4}, 2);
  CHECK(net.num_params() == (3 * 5 + 5) + (5 * 4 + 4) + (4 * 2 + 2));
  Rng rng(1);
  net.init(rng, 1.0);
  const Eigen::MatrixXd y = net.forward(random_inputs(3, 7, rng));
  CHECK(y.rows() == 2);
  CHECK(y.cols() == 7);
  CHECK_THROWS_AS(Mlp(0, {4}, 2), ConfigError);
  CHECK_THROWS_AS(Mlp(3, {0}, 2), ConfigError);
}

TEST_CASE("mlp: backward matches finite differences") {
  Rng rng(7);
  Mlp net(4, {6, 5}, 3);
  net.init(rng, 1.0);
  const Eigen::MatrixXd x = random_inputs(4, 5, rng);
  const Eigen::MatrixXd w = random_inputs(3, 5, rng);
  // Loss = sum(w .* y): dL/dy = w.
  auto loss = [&] { return (net.forward(x).array() * w.array()).sum(); };
  Mlp::Cache cache;
  net.forward(x, cache);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.num_params()));
  net.backward(cache, w, grad);
  CHECK(worst_gradient_error(net, grad, loss) <= 1e-4);
}

TEST_CASE("log_softmax: columns exponentiate to distributions") {
  Eigen::MatrixXd logits(3, 3);
  logits << 1.0, 1000.0, -5.0,
            2.0, 1000.0, 0.0,
            3.0, -1000.0, 5.0;
  const Eigen::MatrixXd lp = log_softmax(logits);
  for (Eigen::Index c = 0; c < 3; ++c) {
    CHECK(lp.col(c).array().exp().sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(lp.col(c).allFinite());
  }
  CHECK(lp(0, 1) == doctest::Approx(std::log(0.5)));
}

TEST_CASE("adam: the first step moves each parameter by lr against its gradient sign") {
  AdamOptimizer opt(3, 0.01);
  Eigen::VectorXd p(3);
  p << 1.0, -2.0, 0.5;
  Eigen::VectorXd g(3);
  g << 0.3, -4.0, 1e-3;
  opt.step(p, g);
  CHECK(p(0) == doctest::Approx(0.99).epsilon(1e-6));
  CHECK(p(1) == doctest::Approx(-1.99).epsilon(1e-6));
  CHECK(p(2) == doctest::Approx(0.49).epsilon(1e-4));
}

TEST_CASE("surrogate: clipped objective examples") {
  const std::vector<double> one{1.0};
  const std::vector<double> adv{3.0};
  CHECK(clipped_surrogate_loss(one, adv, 0.2) == doctest::Approx(-3.0));

  const std::vector<double> hi{1.5};
  const std::vector<double> pos{1.0};
  CHECK(clipped_surrogate_loss(hi, pos, 0.2) == doctest::Approx(-1.2));

  const std::vector<double> lo{0.5};
  const std::vector<double> neg{-1.0};
  CHECK(clipped_surrogate_loss(lo, neg, 0.2) == doctest::Approx(0.8));

  // Pessimistic side is kept: ratio below the range with a positive advantage is not lifted.
  CHECK(clipped_surrogate_loss(lo, pos, 0.2) == doctest::Approx(-0.5));

  const std::vector<double> rs{0.3, 1.0, 2.4, 1.7};
  const std::vector<double> as{-0.4, 1.1, 0.9, -2.0};
  double unclipped = 0.0;
  for (std::size_t i = 0; i < rs.size(); ++i) unclipped += rs[i] * as[i];
  CHECK(clipped_surrogate_loss(rs, as, 10.0) == doctest::Approx(-unclipped / 4.0));

  const std::vector<double> two{1.0, 1.0};
  CHECK_THROWS_AS(clipped_surrogate_loss(two, adv, 0.2), ConfigError);
  const std::vector<double> zero{0.0};
  CHECK_THROWS_AS(clipped_surrogate_loss(zero, adv, 0.2), ConfigError);
  CHECK(clipped_surrogate_loss({}, {}, 0.2) == 0.0);
}

TEST_CASE("actor loss gradient matches finite differences") {
  Rng rng(11);
  Mlp actor(5, {8, 8}, 4);
  actor.init(rng, 1.0);
  const MinibatchView mb = small_batch(actor, rng, 12);
  const double clip = 0.2;
  const double ent = 0.05;
  Eigen::VectorXd grad;
  const LossStats s = actor_loss(actor, mb, clip, ent, &grad);
  CHECK(s.clip_fraction == 0.0);
  auto loss = [&] {
    const LossStats t = actor_loss(actor, mb, clip, ent, nullptr);
    return t.policy_loss - ent * t.entropy;
  };
  CHECK(worst_gradient_error(actor, grad, loss) <= 1e-4);
}

TEST_CASE("actor loss: clipped samples contribute no surrogate gradient") {
  Rng rng(5);
  Mlp actor(3, {4}, 2);
  actor.init(rng, 1.0);
  MinibatchView mb = small_batch(actor, rng, 6);
  // Push every ratio to about e^1: above the range; positive advantages sit on the flat side.
  for (Eigen::Index b = 0; b < 6; ++b) {
    mb.old_log_probs(b) -= 1.0;
    mb.advantages(b) = 1.0;
  }
  Eigen::VectorXd grad;
  const LossStats s = actor_loss(actor, mb, 0.2, 0.0, &grad);
  CHECK(s.clip_fraction == 1.0);
  CHECK(grad.norm() == doctest::Approx(0.0));
}

TEST_CASE("critic loss gradient matches finite differences") {
  Rng rng(13);
  Mlp critic(5, {8, 8}, 1);
  critic.init(rng, 1.0);
  MinibatchView mb;
  mb.observations = random_inputs(5, 9, rng);
  mb.returns = Eigen::VectorXd::Random(9);
  Eigen::VectorXd grad;
  critic_loss(critic, mb, 0.5, &grad);
  auto loss = [&] { return 0.5 * critic_loss(critic, mb, 0.5, nullptr).value_loss; };
  CHECK(worst_gradient_error(critic, grad, loss) <= 1e-4);
}

TEST_CASE("gae: zero rewards and values give zero advantages") {
  Trajectory t;
  t.steps.resize(4);
  t.steps.back().terminated = true;
  for (double a : compute_advantages(t, 0.99, 0.95)) CHECK(a == 0.0);
}

TEST_CASE("gae: a single terminal step is its reward") {
  Trajectory t;
  t.steps.resize(1);
  t.steps[0].reward = 0.33;
  t.steps[0].terminated = true;
  t.bootstrap_value = 7.0;  // ignored after termination
  const auto a = compute_advantages(t, 0.99, 0.95);
  REQUIRE(a.size() == 1);
  CHECK(a[0] == doctest::Approx(0.33));
}

TEST_CASE("gae: three-step episode against the recursive definition") {
  Trajectory t;
  t.steps.resize(3);
  t.steps[0].reward = 0.33;
  t.steps[1].reward = 0.0;
  t.steps[2].reward = 0.33;
  t.steps[2].terminated = true;
  const auto a = compute_advantages(t, 0.99, 0.95);
  REQUIRE(a.size() == 3);
  CHECK(a[2] == doctest::Approx(0.33).epsilon(1e-12));
  CHECK(a[1] == doctest::Approx(0.310365).epsilon(1e-12));
  CHECK(a[0] == doctest::Approx(0.6218982825).epsilon(1e-12));
}

TEST_CASE("gae: bootstrap and episode boundaries") {
  Trajectory t;
  t.steps.resize(3);
  for (auto& s : t.steps) s.value = 0.5;
  t.steps[0].reward = 1.0;
  t.steps[0].terminated = true;  // episode boundary after step 0
  t.steps[1].reward = 0.0;
  t.steps[2].reward = 0.0;
  t.bootstrap_value = 2.0;
  const auto a = compute_advantages(t, 0.9, 0.5);
  const double d2 = 0.9 * 2.0 - 0.5;
  const double d1 = 0.9 * 0.5 - 0.5;
  CHECK(a[2] == doctest::Approx(d2));
  CHECK(a[1] == doctest::Approx(d1 + 0.45 * d2));
  CHECK(a[0] == doctest::Approx(0.5));
}

TEST_CASE("normalize_advantages") {
  std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  normalize_advantages(v);
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / 4.0;
  double var = 0.0;
  for (double x : v) var += x * x;
  CHECK(mean == doctest::Approx(0.0));
  CHECK(var / 4.0 == doctest::Approx(1.0));

  std::vector<double> flat{2.0, 2.0, 2.0};
  normalize_advantages(flat);
  for (double x : flat) CHECK(x == 0.0);

  std::vector<double> single{5.0};
  normalize_advantages(single);
  CHECK(single[0] == 5.0);
}

TEST_CASE("ppo config validation") {
  PpoConfig c;
  CHECK_NOTHROW(c.validate());
  c.clip_eps = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.gamma = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.minibatch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.total_steps = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("policy: probabilities sum to one and select is the argmax") {
  EnvConfig env;
  const int obs_size = 3 * env.n_operators;
  PolicyParams p(obs_size, 5, {16});
  Rng rng(3);
  p.init(rng);
  const Observation obs(static_cast<std::size_t>(obs_size), 0.4);
  const Eigen::VectorXd pr = p.probabilities(obs);
  CHECK(pr.sum() == doctest::Approx(1.0).epsilon(1e-12));
  Eigen::Index best = 0;
  pr.maxCoeff(&best);
  CHECK(p.select(obs) == static_cast<std::size_t>(best));
}

TEST_CASE("rollouts: zero steps, determinism, and serial agreement") {
  const EnvConfig env;
  const HpmParams hpm = HpmParams::defaults();
  const auto factory = allocation_env_factory(env, hpm);
  RolloutCollector a(factory, 3, 99);
  RolloutCollector b(factory, 3, 99);
  RolloutCollector c(factory, 3, 99);
  PolicyParams p(a.observation_size(), a.action_count(), {8});
  Rng rng(1);
  p.init(rng);

  CHECK(a.collect(p, 0).size() == 0);
  CHECK(b.collect_serial(p, 0).size() == 0);
  c.collect(p, 0);

  for (int round = 0; round < 3; ++round) {
    const RolloutBatch x = a.collect(p, 101);
    const RolloutBatch y = b.collect(p, 101);
    const RolloutBatch z = c.collect_serial(p, 101);
    CHECK(x.size() == 101);
    REQUIRE(x.trajectories.size() == 3);
    CHECK(x.trajectories[0].steps.size() == 34);
    CHECK(x.trajectories[2].steps.size() == 33);
    CHECK(x.completed_returns == y.completed_returns);
    CHECK(x.completed_returns == z.completed_returns);
    for (std::size_t w = 0; w < 3; ++w) {
      const auto& s1 = x.trajectories[w].steps;
      const auto& s2 = z.trajectories[w].steps;
      REQUIRE(s1.size() == s2.size());
      for (std::size_t i = 0; i < s1.size(); ++i) {
        CHECK(s1[i].action == s2[i].action);
        CHECK(s1[i].reward == s2[i].reward);
        CHECK(s1[i].log_prob == s2[i].log_prob);
        CHECK(s1[i].observation == s2[i].observation);
      }
      CHECK(x.trajectories[w].bootstrap_value == z.trajectories[w].bootstrap_value);
    }
  }
}

TEST_CASE("rollouts: a uniform policy samples actions uniformly") {
  RolloutCollector col(testing::bandit_factory(0.5, 0.5), 2, 17);
  PolicyParams p(1, 2, {4});  // zero weights: uniform logits
  const RolloutBatch b = col.collect(p, 10000);
  double n1 = 0.0;
  for (const auto& t : b.trajectories) {
    for (const auto& s : t.steps) {
      n1 += static_cast<double>(s.action);
      CHECK(s.log_prob == doctest::Approx(std::log(0.5)));
    }
  }
  const double chi2 = 2.0 * (n1 - 5000.0) * (n1 - 5000.0) / 5000.0;
  CHECK(chi2 < 6.6349);  // chi-square(1) 0.99 quantile
}

TEST_CASE("rollouts: completed returns account for every terminal reward") {
  RolloutCollector col(testing::bandit_factory(0.2, 0.9), 4, 5);
  PolicyParams p(1, 2, {4});
  const RolloutBatch b = col.collect(p, 400);
  double rewards = 0.0;
  std::size_t terminals = 0;
  for (const auto& t : b.trajectories) {
    for (const auto& s : t.steps) {
      rewards += s.reward;
      terminals += s.terminated ? 1u : 0u;
    }
    CHECK(t.bootstrap_value == 0.0);
  }
  CHECK(terminals == b.completed_returns.size());
  CHECK(std::accumulate(b.completed_returns.begin(), b.completed_returns.end(), 0.0) == rewards);
}

TEST_CASE("rollouts: shape mismatch is rejected") {
  RolloutCollector col(testing::bandit_factory(0.5, 0.5), 1, 1);
  PolicyParams p(2, 2, {4});
  CHECK_THROWS_AS(col.collect(p, 10), ConfigError);
  CHECK_THROWS_AS(RolloutCollector(testing::bandit_factory(0.5, 0.5), 0, 1), ConfigError);
}

TEST_CASE("train: zero steps returns the initialized policy") {
  PpoConfig c;
  c.total_steps = 0;
  c.seed = 21;
  c.hidden_sizes = {8};
  const TrainResult r = train(testing::bandit_factory(0.1, 0.9), c);
  CHECK(r.report.updates.empty());
  PolicyParams expect(1, 2, {8});
  Rng rng(21);
  expect.init(rng);
  CHECK(r.policy == expect);
}

TEST_CASE("train: same seed, same weights and metrics") {
  PpoConfig c;
  c.total_steps = 2048;
  c.rollout_steps = 512;
  c.num_envs = 3;
  c.hidden_sizes = {16, 16};
  c.seed = 8;
  const EnvConfig env;
  const HpmParams hpm = HpmParams::defaults();
  const TrainResult a = train(env, c, hpm);
  const TrainResult b = train(env, c, hpm);
  CHECK(a.policy == b.policy);
  REQUIRE(a.report.updates.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(a.report.updates[i].policy_loss == b.report.updates[i].policy_loss);
    CHECK(a.report.updates[i].mean_episode_reward == b.report.updates[i].mean_episode_reward);
  }
  c.seed = 9;
  CHECK_FALSE(train(env, c, hpm).policy == a.policy);
}

TEST_CASE("train: checkpoint hook fires on schedule") {
  PpoConfig c;
  c.total_steps = 5 * 128;
  c.rollout_steps = 128;
  c.num_envs = 2;
  c.hidden_sizes = {8};
  c.checkpoint_every = 2;
  std::vector<int> seen;
  train(testing::bandit_factory(0.3, 0.7), c,
        [&](const PolicyParams&, int update) { seen.push_back(update); });
  CHECK(seen == std::vector<int>{2, 4});
}

TEST_CASE("train: non-finite rewards raise NumericError") {
  PpoConfig c;
  c.total_steps = 256;
  c.rollout_steps = 128;
  c.num_envs = 1;
  c.hidden_sizes = {4};
  const EnvFactory poison = [] { return std::make_unique<testing::PoisonEnv>(); };
  CHECK_THROWS_AS(train(poison, c), NumericError);
}
