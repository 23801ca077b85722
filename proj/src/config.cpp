#include "awac/config.hpp"

#include <fstream>
#include <functional>
#include <map>

#include "awac/error.hpp"

namespace awac {

namespace {

using json = nlohmann::json;
using Setter = std::function<void(const json&)>;

void apply_fields(const json& j, const std::string& section, const std::map<std::string, Setter>& fields) {
  if (!j.is_object()) throw ConfigError(section + " must be an object");
  for (const auto& [key, value] : j.items()) {
    const auto it = fields.find(key);
    if (it == fields.end()) throw ConfigError("unknown key '" + section + "." + key + "'");
    try {
      it->second(value);
    } catch (const json::exception& e) {
      throw ConfigError("bad value for '" + section + "." + key + "': " + e.what());
    }
  }
}

template <class T>
Setter set(T& target) {
  return [&target](const json& v) { target = v.get<T>(); };
}

std::vector<CurveSample> read_samples(const json& j) {
  std::vector<CurveSample> out;
  for (const auto& row : j) {
    const auto xy = row.get<std::vector<double>>();
    if (xy.size() != 2) throw ConfigError("calibration samples are [x, y] pairs");
    out.push_back({xy[0], xy[1]});
  }
  return out;
}

void apply_channel(HpmChannelParams& ch, const json& j, const std::string& name) {
  double mu = ch.mu.value();
  apply_fields(j, name,
               {{"mu", set(mu)},
                {"sigma", set(ch.sigma)},
                {"amplitude", set(ch.amplitude)},
                {"calibration", [&](const json& v) { ch.amplitude = calibrate_amplitude(read_samples(v)); }}});
  ch.mu = WorkloadLevel{mu};
}

json channel_json(const HpmChannelParams& ch) {
  return {{"mu", ch.mu.value()}, {"sigma", ch.sigma}, {"amplitude", ch.amplitude}};
}

}  // namespace

void AppConfig::finalize() {
  env.seed = seed;
  ppo.seed = seed;
  hpm.validate();
  env.validate();
  ppo.validate();
  session.validate();
  if (bench.teams < 2) throw ConfigError("bench.teams must be >= 2");
  if (bench.strategies.size() < 2) throw ConfigError("bench.strategies needs at least 2 entries");
  if (!(bench.accept_probability >= 0.0 && bench.accept_probability <= 1.0)) {
    throw ConfigError("bench.accept_probability must lie in [0,1]");
  }
  if (!(bench.isa_bias_probability >= 0.0 && bench.isa_bias_probability <= 1.0)) {
    throw ConfigError("bench.isa_bias_probability must lie in [0,1]");
  }
  if (!(bench.alpha > 0.0 && bench.alpha < 1.0)) throw ConfigError("bench.alpha must lie in (0,1)");
  if (validate.episodes < 1) throw ConfigError("validate.episodes must be >= 1");
  if (serve.port < 0 || serve.port > 65535) throw ConfigError("serve.port out of range");
  if (serve.tick_ms < 1) throw ConfigError("serve.tick_ms must be >= 1");
}

AppConfig apply_config_json(AppConfig c, const json& j) {
  apply_fields(
      j, "config",
      {{"seed", set(c.seed)},
       {"output_dir", set(c.output_dir)},
       {"hpm",
        [&](const json& v) {
          apply_fields(v, "hpm",
                       {{"subjective", [&](const json& s) { apply_channel(c.hpm.subjective, s, "hpm.subjective"); }},
                        {"objective", [&](const json& s) { apply_channel(c.hpm.objective, s, "hpm.objective"); }},
                        {"alpha_p", set(c.hpm.alpha_p)},
                        {"beta_p", set(c.hpm.beta_p)}});
        }},
       {"env",
        [&](const json& v) {
          apply_fields(v, "env",
                       {{"n_operators", set(c.env.n_operators)},
                        {"total_views", set(c.env.total_views)},
                        {"min_views", set(c.env.min_views)},
                        {"max_views", set(c.env.max_views)},
                        {"sets_per_mission", set(c.env.sets_per_mission)},
                        {"kappa", set(c.env.kappa)},
                        {"noise_sigma", set(c.env.noise_sigma)},
                        {"gamma", set(c.env.gamma)}});
        }},
       {"ppo",
        [&](const json& v) {
          apply_fields(v, "ppo",
                       {{"clip_eps", set(c.ppo.clip_eps)},
                        {"learning_rate", set(c.ppo.learning_rate)},
                        {"gamma", set(c.ppo.gamma)},
                        {"gae_lambda", set(c.ppo.gae_lambda)},
                        {"rollout_steps", set(c.ppo.rollout_steps)},
                        {"epochs_per_update", set(c.ppo.epochs_per_update)},
                        {"minibatch_size", set(c.ppo.minibatch_size)},
                        {"total_steps", set(c.ppo.total_steps)},
                        {"hidden_sizes", set(c.ppo.hidden_sizes)},
                        {"entropy_coef", set(c.ppo.entropy_coef)},
                        {"value_coef", set(c.ppo.value_coef)},
                        {"max_grad_norm", set(c.ppo.max_grad_norm)},
                        {"num_envs", set(c.ppo.num_envs)},
                        {"checkpoint_every", set(c.ppo.checkpoint_every)}});
        }},
       {"session",
        [&](const json& v) {
          json merged = session_config_to_json(c.session);
          if (!v.is_object()) throw ConfigError("session must be an object");
          merged.update(v);
          c.session = session_config_from_json(merged);
        }},
       {"bench",
        [&](const json& v) {
          apply_fields(v, "bench",
                       {{"strategies", set(c.bench.strategies)},
                        {"teams", set(c.bench.teams)},
                        {"accept_probability", set(c.bench.accept_probability)},
                        {"isa_bias_probability", set(c.bench.isa_bias_probability)},
                        {"isa_bias_offset", set(c.bench.isa_bias_offset)},
                        {"policy", set(c.bench.policy)},
                        {"alpha", set(c.bench.alpha)}});
        }},
       {"validate",
        [&](const json& v) {
          apply_fields(v, "validate",
                       {{"episodes", set(c.validate.episodes)}, {"checkpoint", set(c.validate.checkpoint)}});
        }},
       {"serve", [&](const json& v) {
          apply_fields(v, "serve",
                       {{"bind", set(c.serve.bind)},
                        {"port", set(c.serve.port)},
                        {"log_dir", set(c.serve.log_dir)},
                        {"predictor_url", set(c.serve.predictor_url)},
                        {"policy", set(c.serve.policy)},
                        {"tick_ms", set(c.serve.tick_ms)}});
        }}});
  return c;
}

AppConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return apply_config_json(AppConfig{}, j);
}

json config_to_json(const AppConfig& c) {
  return {{"seed", c.seed},
          {"output_dir", c.output_dir},
          {"hpm",
           {{"subjective", channel_json(c.hpm.subjective)},
            {"objective", channel_json(c.hpm.objective)},
            {"alpha_p", c.hpm.alpha_p},
            {"beta_p", c.hpm.beta_p}}},
          {"env",
           {{"n_operators", c.env.n_operators},
            {"total_views", c.env.total_views},
            {"min_views", c.env.min_views},
            {"max_views", c.env.max_views},
            {"sets_per_mission", c.env.sets_per_mission},
            {"kappa", c.env.kappa},
            {"noise_sigma", c.env.noise_sigma},
            {"gamma", c.env.gamma}}},
          {"ppo",
           {{"clip_eps", c.ppo.clip_eps},
            {"learning_rate", c.ppo.learning_rate},
            {"gamma", c.ppo.gamma},
            {"gae_lambda", c.ppo.gae_lambda},
            {"rollout_steps", c.ppo.rollout_steps},
            {"epochs_per_update", c.ppo.epochs_per_update},
            {"minibatch_size", c.ppo.minibatch_size},
            {"total_steps", c.ppo.total_steps},
            {"hidden_sizes", c.ppo.hidden_sizes},
            {"entropy_coef", c.ppo.entropy_coef},
            {"value_coef", c.ppo.value_coef},
            {"max_grad_norm", c.ppo.max_grad_norm},
            {"num_envs", c.ppo.num_envs},
            {"checkpoint_every", c.ppo.checkpoint_every}}},
          {"session", session_config_to_json(c.session)},
          {"bench",
           {{"strategies", c.bench.strategies},
            {"teams", c.bench.teams},
            {"accept_probability", c.bench.accept_probability},
            {"isa_bias_probability", c.bench.isa_bias_probability},
            {"isa_bias_offset", c.bench.isa_bias_offset},
            {"policy", c.bench.policy},
            {"alpha", c.bench.alpha}}},
          {"validate", {{"episodes", c.validate.episodes}, {"checkpoint", c.validate.checkpoint}}},
          {"serve",
           {{"bind", c.serve.bind},
            {"port", c.serve.port},
            {"log_dir", c.serve.log_dir},
            {"predictor_url", c.serve.predictor_url},
            {"policy", c.serve.policy},
            {"tick_ms", c.serve.tick_ms}}}};
}

}  // namespace awac
