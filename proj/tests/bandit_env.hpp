#pragma once

// Toy environments for trainer tests.

#include <limits>
#include <memory>

#include "awac/ppo.hpp"
#include "awac/rng.hpp"

namespace awac::testing {

// One-step, two-armed Bernoulli bandit with a constant observation.
class TwoArmedBandit final : public Environment {
 public:
  TwoArmedBandit(double p0, double p1) : p_{p0, p1} {}

  int observation_size() const override { return 1; }
  int action_count() const override { return 2; }
  Observation reset(std::uint64_t seed) override {
    rng_.seed(seed);
    return {1.0};
  }
  Step step(std::size_t action) override {
    Step s;
    s.observation = {1.0};
    s.reward = uniform01(rng_) < p_[action] ? 1.0 : 0.0;
    s.done = true;
    return s;
  }

 private:
  double p_[2];
  Rng rng_;
};

// Always pays NaN; the trainer must refuse to continue.
class PoisonEnv final : public Environment {
 public:
  int observation_size() const override { return 1; }
  int action_count() const override { return 2; }
  Observation reset(std::uint64_t) override { return {0.0}; }
  Step step(std::size_t) override {
    return {{0.0}, std::numeric_limits<double>::quiet_NaN(), true};
  }
};

inline EnvFactory bandit_factory(double p0, double p1) {
  return [p0, p1] { return std::make_unique<TwoArmedBandit>(p0, p1); };
}

}  // namespace awac::testing
