#include "awac/commands.hpp"

#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include "awac/checkpoint.hpp"
#include "awac/error.hpp"
#include "awac/mission.hpp"
#include "awac/service.hpp"
#include "awac/version.hpp"

namespace awac {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_output(path);
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

RunManifest begin_manifest(const std::string& command, const CommandContext& ctx, json config,
                           std::uint64_t seed) {
  fs::create_directories(ctx.run_dir);
  RunManifest m;
  m.command = command;
  m.argv = ctx.argv;
  m.config = std::move(config);
  m.seed = seed;
  m.started_at = utc_timestamp();
  return m;
}

void finish_manifest(RunManifest& m, const CommandContext& ctx) {
  m.finished_at = utc_timestamp();
  m.write(ctx.run_dir);
}

std::shared_ptr<const PolicyParams> maybe_load_policy(const std::string& path, const EnvConfig& env) {
  if (path.empty()) return nullptr;
  return std::make_shared<const PolicyParams>(load_policy(path, env));
}

}  // namespace

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

fs::path default_run_dir(const std::string& output_dir, std::uint64_t seed) {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%dT%H%M%SZ", &tm);
  const fs::path base = fs::path(output_dir) / (std::string(stamp) + "-seed" + std::to_string(seed));
  fs::path dir = base;
  for (int k = 2; fs::exists(dir); ++k) dir = base.string() + "-" + std::to_string(k);
  return dir;
}

json RunManifest::to_json() const {
  return {{"command", command},
          {"argv", argv},
          {"config", config},
          {"seed", seed},
          {"version", kVersion},
          {"compiler", __VERSION__},
          {"started_at", started_at},
          {"finished_at", finished_at},
          {"outputs", outputs}};
}

void RunManifest::write(const fs::path& run_dir) const {
  write_text(run_dir / "manifest.json", to_json().dump(2) + "\n");
}

// ---- train ------------------------------------------------------------------------

RunManifest cmd_train(const AppConfig& config, const CommandContext& ctx) {
  RunManifest m = begin_manifest("train", ctx, config_to_json(config), config.seed);
  const fs::path ckpt_dir = ctx.run_dir / "checkpoints";
  const CheckpointHook hook = [&](const PolicyParams& p, int update) {
    fs::create_directories(ckpt_dir);
    char name[32];
    std::snprintf(name, sizeof name, "update-%05d.bin", update);
    save_policy(p, ckpt_dir / name);
    m.outputs.push_back((fs::path("checkpoints") / name).string());
  };
  if (ctx.log) *ctx.log << "training for " << config.ppo.total_steps << " steps\n";
  const TrainResult result = train(config.env, config.ppo, config.hpm, hook);

  save_policy(result.policy, ctx.run_dir / "policy.bin");
  {
    auto out = open_output(ctx.run_dir / "train_metrics.csv");
    result.report.write_csv(out);
  }
  m.outputs.push_back("policy.bin");
  m.outputs.push_back("train_metrics.csv");
  if (ctx.log) {
    *ctx.log << "trailing mean episode reward " << result.report.trailing_mean_reward << " after "
             << result.report.updates.size() << " updates (" << result.report.wall_clock_s << " s)\n";
  }
  finish_manifest(m, ctx);
  return m;
}

// ---- validate -----------------------------------------------------------------------

ValidationReport validate_against_random(const PolicyParams* policy, const EnvConfig& env,
                                         const HpmParams& hpm, std::int64_t episodes,
                                         std::uint64_t seed,
                                         std::vector<EpisodeRecord>* policy_records,
                                         std::vector<EpisodeRecord>* random_records) {
  if (episodes < 1) throw ConfigError("validate: episodes must be >= 1");
  const Allocator random(StrategyKind::kRandom, env, hpm);
  const auto a = policy ? evaluate_policy(*policy, env, hpm, episodes, seed)
                        : evaluate_strategy(random, env, hpm, episodes, seed);
  const auto b = evaluate_strategy(random, env, hpm, episodes, seed);
  std::vector<double> fa;
  std::vector<double> fb;
  for (const auto& r : a) fa.push_back(r.final_perf);
  for (const auto& r : b) fb.push_back(r.final_perf);
  ValidationReport report;
  report.episodes = episodes;
  report.seed = seed;
  report.policy = policy ? "trained" : "random";
  report.test = paired_t_test(fa, fb);
  report.insufficient_n = !report.test.p_value.has_value();
  if (policy_records) *policy_records = a;
  if (random_records) *random_records = b;
  return report;
}

json ValidationReport::to_json() const {
  json p = test.p_value ? json(*test.p_value) : json(nullptr);
  return {{"episodes", episodes},
          {"seed", seed},
          {"policy", policy},
          {"baseline", "random"},
          {"metric", "final team performance"},
          {"mean_policy", test.mean_a},
          {"mean_random", test.mean_b},
          {"mean_difference", test.mean_difference},
          {"t", test.t_stat},
          {"df", test.df},
          {"p_value", p},
          {"degenerate", test.degenerate},
          {"insufficient_n", insufficient_n}};
}

std::string ValidationReport::to_text() const {
  std::ostringstream out;
  char line[256];
  out << "Paired validation: " << policy << " vs random, " << episodes << " episodes, seed " << seed << "\n";
  std::snprintf(line, sizeof line, "  mean final team performance  policy %.6f  random %.6f  diff %+.6f\n",
                test.mean_a, test.mean_b, test.mean_difference);
  out << line;
  if (insufficient_n) {
    out << "  paired t-test: not computed (insufficient n)\n";
  } else {
    // A p-value below the double range prints as a bound rather than as zero.
    char p_text[32];
    if (*test.p_value < 1e-300 && !test.degenerate) {
      std::snprintf(p_text, sizeof p_text, "< 1e-300");
    } else {
      std::snprintf(p_text, sizeof p_text, "= %.4g", *test.p_value);
    }
    std::snprintf(line, sizeof line, "  paired t(%d) = %.4f, p %s%s\n", test.df, test.t_stat, p_text,
                  test.degenerate ? " (zero variance of differences)" : "");
    out << line;
  }
  return out.str();
}

RunManifest cmd_validate(const AppConfig& config, const CommandContext& ctx) {
  if (config.validate.checkpoint.empty()) throw ConfigError("validate: a checkpoint is required");
  RunManifest m = begin_manifest("validate", ctx, config_to_json(config), config.seed);
  std::optional<PolicyParams> policy;
  if (config.validate.checkpoint != "random") policy = load_policy(config.validate.checkpoint, config.env);

  std::vector<EpisodeRecord> a;
  std::vector<EpisodeRecord> b;
  ValidationReport report = validate_against_random(policy ? &*policy : nullptr, config.env, config.hpm,
                                                    config.validate.episodes, config.seed, &a, &b);
  report.policy = config.validate.checkpoint;

  write_text(ctx.run_dir / "validation.json", report.to_json().dump(2) + "\n");
  write_text(ctx.run_dir / "validation.txt", report.to_text());
  {
    auto out = open_output(ctx.run_dir / "episodes.csv");
    out << "episode,seed,policy_final,random_final,policy_return,random_return\n";
    char line[256];
    for (std::size_t i = 0; i < a.size(); ++i) {
      std::snprintf(line, sizeof line, "%zu,%llu,%.10g,%.10g,%.10g,%.10g\n", i,
                    static_cast<unsigned long long>(a[i].seed), a[i].final_perf, b[i].final_perf,
                    a[i].episode_return, b[i].episode_return);
      out << line;
    }
  }
  m.outputs = {"validation.json", "validation.txt", "episodes.csv"};
  if (ctx.log) *ctx.log << report.to_text();
  finish_manifest(m, ctx);
  return m;
}

// ---- bench ------------------------------------------------------------------------

RunManifest cmd_bench(const AppConfig& config, const CommandContext& ctx) {
  std::vector<BenchStrategy> strategies;
  for (const auto& s : config.bench.strategies) strategies.push_back(parse_bench_strategy(s));
  MissionConfig mc;
  mc.env = config.env;
  mc.hpm = config.hpm;
  mc.isa_bias = {config.bench.isa_bias_probability, config.bench.isa_bias_offset};
  mc.accept_probability = config.bench.accept_probability;
  mc.policy = maybe_load_policy(config.bench.policy, config.env);

  RunManifest m = begin_manifest("bench", ctx, config_to_json(config), config.seed);
  const TrialMatrix raw = simulate_bench(mc, strategies, config.bench.teams, config.seed);
  const TrialMatrix normalized = normalize_rows(raw);
  const StatsReport report = analyze(normalized, config.bench.alpha, "Simulated bench (row-normalized)");
  {
    auto out = open_output(ctx.run_dir / "bench_raw.csv");
    write_trial_csv(out, raw);
  }
  {
    auto out = open_output(ctx.run_dir / "bench_normalized.csv");
    write_trial_csv(out, normalized);
  }
  std::string text = format_report(report);
  for (const auto& s : strategies) {
    if (s.task.strategy == StrategyKind::kFixedNegotiated) {
      text += "Note: the negotiated split is modeled as a frozen greedy allocation (an interpretation).\n";
      break;
    }
  }
  write_text(ctx.run_dir / "report.txt", text);
  write_text(ctx.run_dir / "report.json", report_json(report).dump(2) + "\n");
  m.outputs = {"bench_raw.csv", "bench_normalized.csv", "report.txt", "report.json"};
  if (ctx.log) *ctx.log << text;
  finish_manifest(m, ctx);
  return m;
}

// ---- stats ------------------------------------------------------------------------

std::vector<StatsReport> run_stats(const StatsOptions& options) {
  if (!(options.alpha > 0.0 && options.alpha < 1.0)) throw ConfigError("stats: alpha must lie in (0,1)");
  TrialMatrix m = read_trial_csv(options.csv);
  if (options.normalize) m = normalize_rows(m);
  std::vector<std::vector<std::string>> sets = options.column_sets;
  if (sets.empty()) sets.push_back(m.col_labels());
  std::vector<StatsReport> reports;
  for (const auto& cols : sets) {
    std::string title = "Conditions";
    for (std::size_t i = 0; i < cols.size(); ++i) title += (i ? "," : " ") + cols[i];
    reports.push_back(analyze(m.select_columns(cols), options.alpha, title));
  }
  return reports;
}

RunManifest cmd_stats(const StatsOptions& options, const CommandContext& ctx) {
  json cfg = {{"csv", options.csv.string()},
              {"column_sets", options.column_sets},
              {"alpha", options.alpha},
              {"normalize", options.normalize}};
  const auto reports = run_stats(options);
  RunManifest m = begin_manifest("stats", ctx, cfg, options.seed);
  std::string text;
  json all = json::array();
  for (const auto& r : reports) {
    text += format_report(r) + "\n";
    all.push_back(report_json(r));
  }
  write_text(ctx.run_dir / "report.txt", text);
  write_text(ctx.run_dir / "report.json", all.dump(2) + "\n");
  m.outputs = {"report.txt", "report.json"};
  if (ctx.log) *ctx.log << text;
  finish_manifest(m, ctx);
  return m;
}

// ---- serve ------------------------------------------------------------------------

RunManifest cmd_serve(const AppConfig& config, const CommandContext& ctx) {
  RunManifest m = begin_manifest("serve", ctx, config_to_json(config), config.seed);
  ServiceConfig sc;
  sc.bind_address = config.serve.bind;
  sc.port = static_cast<unsigned short>(config.serve.port);
  sc.log_dir = config.serve.log_dir;
  sc.session_defaults = config.session;
  sc.seed = config.seed;
  sc.predictor_url = config.serve.predictor_url;
  sc.policy = maybe_load_policy(config.serve.policy, config.session.env_config());
  sc.hpm = config.hpm;
  sc.tick_ms = config.serve.tick_ms;
  sc.handle_signals = true;

  SessionService service(sc);
  service.start();
  m.outputs = {fs::absolute(sc.log_dir).string()};
  m.write(ctx.run_dir);
  if (ctx.log) {
    *ctx.log << "listening on http://" << sc.bind_address << ":" << service.port() << " (logs in "
             << sc.log_dir.string() << ")" << std::endl;
  }
  service.wait();
  if (ctx.log) *ctx.log << "stopped; session logs flushed" << std::endl;
  finish_manifest(m, ctx);
  return m;
}

}  // namespace awac
