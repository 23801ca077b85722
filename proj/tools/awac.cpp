// awac: train, validate, bench, stats and serve from one entry point.
//
// Precedence: command-line flags > --config file > built-in defaults.
// Exit codes: 0 ok, 1 other failure, 2 config, 3 I/O, 4 numeric.

#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "awac/commands.hpp"
#include "awac/config.hpp"
#include "awac/error.hpp"
#include "awac/version.hpp"

namespace {

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string run_dir;
  std::optional<std::string> output_dir;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config_path, "JSON config file");
  cmd->add_option("--seed", c.seed, "master seed");
  cmd->add_option("--run-dir", c.run_dir, "output directory for this run (default: <output_dir>/<time>-seed<seed>)");
  cmd->add_option("--output-dir", c.output_dir, "parent directory for run directories");
  cmd->add_flag("-q,--quiet", c.quiet, "suppress progress output");
}

awac::AppConfig base_config(const Common& c) {
  awac::AppConfig cfg = c.config_path.empty() ? awac::AppConfig{} : awac::load_config(c.config_path);
  if (c.seed) cfg.seed = *c.seed;
  if (c.output_dir) cfg.output_dir = *c.output_dir;
  return cfg;
}

awac::CommandContext context(const Common& c, std::uint64_t seed, const std::string& output_dir,
                             const std::vector<std::string>& argv) {
  awac::CommandContext ctx;
  ctx.run_dir = c.run_dir.empty() ? awac::default_run_dir(output_dir, seed) : std::filesystem::path(c.run_dir);
  ctx.argv = argv;
  ctx.log = c.quiet ? nullptr : &std::cout;
  return ctx;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv, argv + argc);
  CLI::App app{"Affective workload allocation: simulator, trainer, statistics and live-session service"};
  app.set_version_flag("--version", awac::kVersion);
  app.require_subcommand(1);

  Common common;

  auto* train = app.add_subcommand("train", "train an allocation policy with PPO");
  add_common(train, common);
  std::optional<std::int64_t> total_steps;
  std::optional<int> num_envs;
  std::optional<double> noise;
  train->add_option("--total-steps", total_steps, "environment steps to train for (0 writes an untrained policy)");
  train->add_option("--num-envs", num_envs, "parallel rollout workers");
  train->add_option("--noise", noise, "transition noise sigma");

  auto* validate = app.add_subcommand("validate", "paired trained-vs-random evaluation");
  add_common(validate, common);
  std::optional<std::string> checkpoint;
  std::optional<std::int64_t> episodes;
  validate->add_option("checkpoint", checkpoint, "policy checkpoint, or 'random'");
  validate->add_option("--episodes", episodes, "paired episodes");

  auto* bench = app.add_subcommand("bench", "simulate teams under several strategies and compare them");
  add_common(bench, common);
  std::optional<std::string> strategies;
  std::optional<int> teams;
  std::optional<std::string> bench_policy;
  bench->add_option("--strategies", strategies, "comma list of task letters (A-H) or strategy names");
  bench->add_option("--teams", teams, "simulated teams");
  bench->add_option("--policy", bench_policy, "checkpoint for the adaptive strategies");

  auto* stats = app.add_subcommand("stats", "repeated-measures ANOVA and Bonferroni pairwise tests on a CSV");
  add_common(stats, common);
  awac::StatsOptions stats_opts;
  std::vector<std::string> column_sets;
  stats->add_option("csv", stats_opts.csv, "trial matrix CSV")->required();
  stats->add_option("--columns", column_sets, "comma list of columns; repeat for several analyses");
  stats->add_option("--alpha", stats_opts.alpha, "significance level");
  stats->add_flag("--normalize", stats_opts.normalize, "divide each row by its mean first");

  auto* serve = app.add_subcommand("serve", "run the live-session HTTP/WebSocket service");
  add_common(serve, common);
  std::optional<std::string> bind;
  std::optional<int> port;
  std::optional<std::string> log_dir;
  std::optional<std::string> predictor_url;
  std::optional<std::string> serve_policy;
  serve->add_option("--bind", bind, "bind address");
  serve->add_option("--port", port, "TCP port (0 picks one)");
  serve->add_option("--log-dir", log_dir, "directory for session JSONL logs");
  serve->add_option("--predictor-url", predictor_url, "external workload predictor (http://host:port/path)");
  serve->add_option("--policy", serve_policy, "checkpoint for the adaptive strategies");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(awac::ExitCode::kConfig);
  }

  try {
    if (*stats) {
      stats_opts.seed = common.seed.value_or(0);
      for (const auto& s : column_sets) stats_opts.column_sets.push_back(split_commas(s));
      const std::string out_dir = common.output_dir.value_or("runs");
      awac::cmd_stats(stats_opts, context(common, stats_opts.seed, out_dir, args));
      return 0;
    }

    awac::AppConfig cfg = base_config(common);
    if (*train) {
      if (total_steps) cfg.ppo.total_steps = *total_steps;
      if (num_envs) cfg.ppo.num_envs = *num_envs;
      if (noise) cfg.env.noise_sigma = *noise;
      cfg.finalize();
      awac::cmd_train(cfg, context(common, cfg.seed, cfg.output_dir, args));
    } else if (*validate) {
      if (checkpoint) cfg.validate.checkpoint = *checkpoint;
      if (episodes) cfg.validate.episodes = *episodes;
      cfg.finalize();
      awac::cmd_validate(cfg, context(common, cfg.seed, cfg.output_dir, args));
    } else if (*bench) {
      if (strategies) cfg.bench.strategies = split_commas(*strategies);
      if (teams) cfg.bench.teams = *teams;
      if (bench_policy) cfg.bench.policy = *bench_policy;
      cfg.finalize();
      awac::cmd_bench(cfg, context(common, cfg.seed, cfg.output_dir, args));
    } else if (*serve) {
      if (bind) cfg.serve.bind = *bind;
      if (port) cfg.serve.port = *port;
      if (log_dir) cfg.serve.log_dir = *log_dir;
      if (predictor_url) cfg.serve.predictor_url = *predictor_url;
      if (serve_policy) cfg.serve.policy = *serve_policy;
      cfg.finalize();
      awac::cmd_serve(cfg, context(common, cfg.seed, cfg.output_dir, args));
    }
  } catch (const awac::Error& e) {
    std::cerr << "awac: " << e.what() << "\n";
    return static_cast<int>(e.exit_code());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "awac: " << e.what() << "\n";
    return static_cast<int>(awac::ExitCode::kIo);
  } catch (const std::exception& e) {
    std::cerr << "awac: " << e.what() << "\n";
    return static_cast<int>(awac::ExitCode::kFailure);
  }
  return 0;
}
