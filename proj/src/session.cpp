#include "awac/session.hpp"

#include "awac/checkpoint.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <set>
#include <sstream>

namespace awac {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

int resolved_max(const SessionConfig& c) {
  return c.max_views > 0 ? c.max_views : c.total_views - (c.n_operators - 1) * c.min_views;
}

bool feasible_views(const std::vector<int>& views, int n, int total, int lo, int hi) {
  if (views.size() != static_cast<std::size_t>(n)) return false;
  int sum = 0;
  for (int v : views) {
    if (v < lo || v > hi) return false;
    sum += v;
  }
  return sum == total;
}

// Views are laid out contiguously: operator 0 watches [0, v0), operator 1
// watches [v0, v0 + v1), and so on.
int owner_of(const std::vector<int>& views, int view) {
  int start = 0;
  for (std::size_t i = 0; i < views.size(); ++i) {
    if (view >= start && view < start + views[i]) return static_cast<int>(i);
    start += views[i];
  }
  return -1;
}

}  // namespace

// ---- config ---------------------------------------------------------------------

void SessionConfig::validate() const {
  if (task_plan.empty()) throw ConfigError("session: task_plan is empty");
  for (char t : task_plan) task_spec(t);
  if (!(set_duration_s > 0.0) || !(isa_window_s > 0.0) || !(approval_window_s > 0.0)) {
    throw ConfigError("session: durations must be > 0");
  }
  if (break_s < 0.0) throw ConfigError("session: break_s must be >= 0");
  if (sets_per_task < 1) throw ConfigError("session: sets_per_task must be >= 1");
  if (!(abnormal_rate >= 0.0) || !(normal_rate >= 0.0)) throw ConfigError("session: rates must be >= 0");
  if (!(object_dwell_s > 0.0)) throw ConfigError("session: object_dwell_s must be > 0");
  if (!(predictor_noise >= 0.0)) throw ConfigError("session: predictor_noise must be >= 0");
  env_config().validate();
}

EnvConfig SessionConfig::env_config() const {
  EnvConfig e;
  e.n_operators = n_operators;
  e.total_views = total_views;
  e.min_views = min_views;
  e.max_views = max_views;
  e.sets_per_mission = sets_per_task;
  e.kappa = kappa;
  return e;
}

nlohmann::json session_config_to_json(const SessionConfig& c) {
  std::string plan(c.task_plan.begin(), c.task_plan.end());
  return {{"task_plan", plan},
          {"set_duration_s", c.set_duration_s},
          {"isa_window_s", c.isa_window_s},
          {"approval_window_s", c.approval_window_s},
          {"break_s", c.break_s},
          {"sets_per_task", c.sets_per_task},
          {"n_operators", c.n_operators},
          {"total_views", c.total_views},
          {"min_views", c.min_views},
          {"max_views", resolved_max(c)},
          {"abnormal_rate", c.abnormal_rate},
          {"normal_rate", c.normal_rate},
          {"object_dwell_s", c.object_dwell_s},
          {"kappa", c.kappa},
          {"predictor_noise", c.predictor_noise}};
}

SessionConfig session_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("session config must be an object");
  SessionConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "task_plan") {
        const auto plan = value.get<std::string>();
        c.task_plan.assign(plan.begin(), plan.end());
      } else if (key == "set_duration_s") {
        c.set_duration_s = value.get<double>();
      } else if (key == "isa_window_s") {
        c.isa_window_s = value.get<double>();
      } else if (key == "approval_window_s") {
        c.approval_window_s = value.get<double>();
      } else if (key == "break_s") {
        c.break_s = value.get<double>();
      } else if (key == "sets_per_task") {
        c.sets_per_task = value.get<int>();
      } else if (key == "n_operators") {
        c.n_operators = value.get<int>();
      } else if (key == "total_views") {
        c.total_views = value.get<int>();
      } else if (key == "min_views") {
        c.min_views = value.get<int>();
      } else if (key == "max_views") {
        c.max_views = value.get<int>();
      } else if (key == "abnormal_rate") {
        c.abnormal_rate = value.get<double>();
      } else if (key == "normal_rate") {
        c.normal_rate = value.get<double>();
      } else if (key == "object_dwell_s") {
        c.object_dwell_s = value.get<double>();
      } else if (key == "kappa") {
        c.kappa = value.get<double>();
      } else if (key == "predictor_noise") {
        c.predictor_noise = value.get<double>();
      } else {
        throw ConfigError("session config: unknown key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("session config: ") + e.what());
  }
  return c;
}

std::string_view to_string(ObjectKind kind) noexcept {
  return kind == ObjectKind::kAbnormal ? "abnormal" : "normal";
}

std::string_view to_string(SurveyKind kind) noexcept {
  switch (kind) {
    case SurveyKind::kSam: return "SAM";
    case SurveyKind::kIsa: return "ISA";
    case SurveyKind::kNasaTlx: return "NASA-TLX";
  }
  return "?";
}

SurveyKind parse_survey_kind(std::string_view s) {
  if (s == "SAM") return SurveyKind::kSam;
  if (s == "ISA") return SurveyKind::kIsa;
  if (s == "NASA-TLX") return SurveyKind::kNasaTlx;
  throw ConfigError("unknown survey kind '" + std::string(s) + "'");
}

std::string_view to_string(SessionPhase phase) noexcept {
  switch (phase) {
    case SessionPhase::kCreated: return "created";
    case SessionPhase::kPlaying: return "playing";
    case SessionPhase::kIsaSession: return "isa_session";
    case SessionPhase::kApprovalSession: return "approval_session";
    case SessionPhase::kBreak: return "break";
    case SessionPhase::kEnded: return "ended";
  }
  return "?";
}

// ---- schedule -------------------------------------------------------------------

std::size_t AnomalySchedule::total_objects() const noexcept {
  std::size_t n = 0;
  for (const auto& task : sets) {
    for (const auto& set : task) n += set.size();
  }
  return n;
}

AnomalySchedule draw_schedule(const SessionConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  const auto dwell = static_cast<std::int64_t>(std::llround(config.object_dwell_s * 1000.0));
  AnomalySchedule schedule;
  int next_id = 1;
  for (std::size_t task = 0; task < config.task_plan.size(); ++task) {
    auto& task_sets = schedule.sets.emplace_back();
    for (int set = 0; set < config.sets_per_task; ++set) {
      auto& objects = task_sets.emplace_back();
      for (int view = 0; view < config.total_views; ++view) {
        for (const auto kind : {ObjectKind::kAbnormal, ObjectKind::kNormal}) {
          const double per_minute =
              kind == ObjectKind::kAbnormal ? config.abnormal_rate : config.normal_rate;
          if (per_minute <= 0.0) continue;
          std::exponential_distribution<double> gap(per_minute / 60.0);
          for (double t = gap(rng); t < config.set_duration_s; t += gap(rng)) {
            objects.push_back({0, view, kind, static_cast<std::int64_t>(std::llround(t * 1000.0)), dwell});
          }
        }
      }
      std::stable_sort(objects.begin(), objects.end(), [](const auto& a, const auto& b) {
        return a.spawn_offset_ms < b.spawn_offset_ms;
      });
      for (auto& o : objects) o.object_id = next_id++;
    }
  }
  return schedule;
}

// ---- event JSON -----------------------------------------------------------------

std::string_view SessionEvent::type() const noexcept {
  return std::visit(
      Overloaded{
          [](const ev::SessionStart&) { return std::string_view("session_start"); },
          [](const ev::TaskStart&) { return std::string_view("task_start"); },
          [](const ev::SetStart&) { return std::string_view("set_start"); },
          [](const ev::ObjectSpawn&) { return std::string_view("object_spawn"); },
          [](const ev::ObjectExpire&) { return std::string_view("object_expire"); },
          [](const ev::Click&) { return std::string_view("click"); },
          [](const ev::ScoreUpdate&) { return std::string_view("score_update"); },
          [](const ev::IsaPrompt&) { return std::string_view("isa_prompt"); },
          [](const ev::IsaResponse&) { return std::string_view("isa_response"); },
          [](const ev::PredictionSample&) { return std::string_view("prediction_sample"); },
          [](const ev::ApprovalPrompt&) { return std::string_view("approval_prompt"); },
          [](const ev::ApprovalDecision&) { return std::string_view("approval_decision"); },
          [](const ev::ReallocationApplied&) { return std::string_view("reallocation_applied"); },
          [](const ev::SetEnd&) { return std::string_view("set_end"); },
          [](const ev::SurveySubmitted&) { return std::string_view("survey_submitted"); },
          [](const ev::TaskEnd&) { return std::string_view("task_end"); },
          [](const ev::SessionEnd&) { return std::string_view("session_end"); },
      },
      payload);
}

nlohmann::json to_json(const SessionEvent& e) {
  nlohmann::json j = {{"seq", e.seq}, {"t", e.t_ms}, {"type", e.type()}};
  std::visit(
      Overloaded{
          [&](const ev::SessionStart& p) {
            j["config"] = p.config;
            j["seed"] = p.seed;
            j["schema_version"] = kSessionSchemaVersion;
          },
          [&](const ev::TaskStart& p) {
            j["task_index"] = p.task_index;
            j["task"] = std::string(1, p.task);
            j["strategy"] = p.strategy;
          },
          [&](const ev::SetStart& p) {
            j["task_index"] = p.task_index;
            j["set"] = p.set;
            j["views"] = p.views;
          },
          [&](const ev::ObjectSpawn& p) {
            j["object_id"] = p.object_id;
            j["view"] = p.view;
            j["kind"] = to_string(p.kind);
          },
          [&](const ev::ObjectExpire& p) {
            j["object_id"] = p.object_id;
            j["view"] = p.view;
          },
          [&](const ev::Click& p) {
            j["operator"] = p.operator_id;
            j["view"] = p.view;
            j["object_id"] = p.object_id ? nlohmann::json(*p.object_id) : nlohmann::json(nullptr);
            j["accepted"] = p.accepted;
            if (!p.reason.empty()) j["reason"] = p.reason;
          },
          [&](const ev::ScoreUpdate& p) {
            j["operator"] = p.operator_id;
            j["delta"] = p.delta;
            j["team_total"] = p.team_total;
          },
          [&](const ev::IsaPrompt& p) {
            j["operator"] = p.operator_id;
            j["deadline"] = p.deadline_ms;
          },
          [&](const ev::IsaResponse& p) {
            j["operator"] = p.operator_id;
            j["score"] = p.score;
            j["defaulted"] = p.defaulted;
          },
          [&](const ev::PredictionSample& p) {
            j["operator"] = p.operator_id;
            j["workload"] = p.workload;
            j["source"] = p.source;
          },
          [&](const ev::ApprovalPrompt& p) {
            j["operator"] = p.operator_id;
            j["current"] = p.current;
            j["proposed"] = p.proposed;
            j["predicted_gain"] = p.predicted_gain;
            j["deadline"] = p.deadline_ms;
          },
          [&](const ev::ApprovalDecision& p) {
            j["operator"] = p.operator_id;
            j["accept"] = p.accept;
            j["timed_out"] = p.timed_out;
          },
          [&](const ev::ReallocationApplied& p) {
            j["views"] = p.views;
            j["changed"] = p.changed;
          },
          [&](const ev::SetEnd& p) {
            j["task_index"] = p.task_index;
            j["set"] = p.set;
          },
          [&](const ev::SurveySubmitted& p) {
            j["operator"] = p.operator_id;
            j["kind"] = to_string(p.kind);
            j["payload"] = p.payload;
          },
          [&](const ev::TaskEnd& p) { j["task_index"] = p.task_index; },
          [&](const ev::SessionEnd& p) { j["completed"] = p.completed; },
      },
      e.payload);
  return j;
}

SessionEvent event_from_json(const nlohmann::json& j) {
  SessionEvent e;
  e.seq = j.at("seq").get<std::int64_t>();
  e.t_ms = j.at("t").get<std::int64_t>();
  const auto type = j.at("type").get<std::string>();
  const auto op = [&] { return j.at("operator").get<int>(); };
  if (type == "session_start") {
    e.payload = ev::SessionStart{j.at("config"), j.at("seed").get<std::uint64_t>()};
  } else if (type == "task_start") {
    const auto task = j.at("task").get<std::string>();
    if (task.size() != 1) throw ConfigError("task must be a single letter");
    e.payload = ev::TaskStart{j.at("task_index").get<int>(), task[0], j.at("strategy").get<std::string>()};
  } else if (type == "set_start") {
    e.payload = ev::SetStart{j.at("task_index").get<int>(), j.at("set").get<int>(),
                             j.at("views").get<std::vector<int>>()};
  } else if (type == "object_spawn") {
    const auto kind = j.at("kind").get<std::string>();
    if (kind != "abnormal" && kind != "normal") throw ConfigError("unknown object kind");
    e.payload = ev::ObjectSpawn{j.at("object_id").get<int>(), j.at("view").get<int>(),
                                kind == "abnormal" ? ObjectKind::kAbnormal : ObjectKind::kNormal};
  } else if (type == "object_expire") {
    e.payload = ev::ObjectExpire{j.at("object_id").get<int>(), j.at("view").get<int>()};
  } else if (type == "click") {
    ev::Click c;
    c.operator_id = op();
    c.view = j.at("view").get<int>();
    if (!j.at("object_id").is_null()) c.object_id = j.at("object_id").get<int>();
    c.accepted = j.at("accepted").get<bool>();
    c.reason = j.value("reason", std::string{});
    e.payload = c;
  } else if (type == "score_update") {
    e.payload = ev::ScoreUpdate{op(), j.at("delta").get<int>(), j.at("team_total").get<int>()};
  } else if (type == "isa_prompt") {
    e.payload = ev::IsaPrompt{op(), j.at("deadline").get<std::int64_t>()};
  } else if (type == "isa_response") {
    e.payload = ev::IsaResponse{op(), j.at("score").get<int>(), j.at("defaulted").get<bool>()};
  } else if (type == "prediction_sample") {
    e.payload = ev::PredictionSample{op(), j.at("workload").get<double>(), j.at("source").get<std::string>()};
  } else if (type == "approval_prompt") {
    e.payload = ev::ApprovalPrompt{op(), j.at("current").get<std::vector<int>>(),
                                   j.at("proposed").get<std::vector<int>>(),
                                   j.at("predicted_gain").get<double>(),
                                   j.at("deadline").get<std::int64_t>()};
  } else if (type == "approval_decision") {
    e.payload = ev::ApprovalDecision{op(), j.at("accept").get<bool>(), j.at("timed_out").get<bool>()};
  } else if (type == "reallocation_applied") {
    e.payload = ev::ReallocationApplied{j.at("views").get<std::vector<int>>(), j.at("changed").get<bool>()};
  } else if (type == "set_end") {
    e.payload = ev::SetEnd{j.at("task_index").get<int>(), j.at("set").get<int>()};
  } else if (type == "survey_submitted") {
    e.payload = ev::SurveySubmitted{op(), parse_survey_kind(j.at("kind").get<std::string>()),
                                    j.at("payload")};
  } else if (type == "task_end") {
    e.payload = ev::TaskEnd{j.at("task_index").get<int>()};
  } else if (type == "session_end") {
    e.payload = ev::SessionEnd{j.at("completed").get<bool>()};
  } else {
    throw ConfigError("unknown event type '" + type + "'");
  }
  return e;
}

// ---- replay ---------------------------------------------------------------------

namespace {

class Replayer {
 public:
  void feed(std::size_t line, const SessionEvent& e) {
    line_ = line;
    ++result_.events;
    if (result_.ended) fail("event after session_end");
    if (seen_any_) {
      if (e.t_ms < prev_t_) fail("timestamp decreases");
      if (e.seq != prev_seq_ + 1) fail("sequence number is not consecutive");
    } else if (!std::holds_alternative<ev::SessionStart>(e.payload)) {
      fail("log must begin with session_start");
    }
    seen_any_ = true;
    prev_t_ = e.t_ms;
    prev_seq_ = e.seq;
    if (pending_ && !std::holds_alternative<ev::ScoreUpdate>(e.payload)) {
      fail("hit click is not followed by its score_update");
    }
    std::visit([&](const auto& p) { on(p); }, e.payload);
  }

  ReplayResult finish() {
    if (pending_) fail("log ends before the score_update of a hit");
    result_.final_views = views_;
    return result_;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const { throw ReplayError(line_, what); }

  void need_open_set(bool open) const {
    if (in_set_ != open) fail(open ? "event outside an active set" : "event inside an active set");
  }

  void check_operator(int op) const {
    if (op < 0 || op >= config_.n_operators) fail("unknown operator " + std::to_string(op));
  }

  void check_views(const std::vector<int>& views) const {
    if (!feasible_views(views, config_.n_operators, config_.total_views, config_.min_views,
                        resolved_max(config_))) {
      fail("infeasible view assignment");
    }
  }

  void on(const ev::SessionStart& p) {
    if (started_) fail("duplicate session_start");
    started_ = true;
    try {
      config_ = session_config_from_json(p.config);
      config_.validate();
    } catch (const Error& err) {
      fail(std::string("bad session config: ") + err.what());
    }
    views_ = equal_split(config_.env_config()).views;
    result_.ledger.operator_totals.assign(static_cast<std::size_t>(config_.n_operators), 0);
    result_.ledger.set_totals.assign(config_.task_plan.size() * static_cast<std::size_t>(config_.sets_per_task), 0);
  }
  void on(const ev::TaskStart& p) {
    need_open_set(false);
    if (p.task_index < 0 || p.task_index >= static_cast<int>(config_.task_plan.size())) {
      fail("task index out of range");
    }
    task_index_ = p.task_index;
    sets_in_task_ = 0;
  }
  void on(const ev::SetStart& p) {
    need_open_set(false);
    if (!isa_open_.empty() || !approval_open_.empty()) fail("set starts while a prompt is open");
    if (p.task_index != task_index_ || p.set != sets_in_task_ + 1) fail("set numbering out of order");
    check_views(p.views);
    views_ = p.views;
    in_set_ = true;
    set_ = p.set;
  }
  void on(const ev::ObjectSpawn& p) {
    need_open_set(true);
    if (p.view < 0 || p.view >= config_.total_views) fail("spawn on unknown view");
    if (!live_.emplace(p.object_id, std::make_pair(p.view, p.kind)).second) fail("object spawned twice");
  }
  void on(const ev::ObjectExpire& p) {
    const auto it = live_.find(p.object_id);
    if (it == live_.end() || it->second.first != p.view) fail("expire of an object that is not live");
    live_.erase(it);
  }
  void on(const ev::Click& p) {
    check_operator(p.operator_id);
    if (!p.accepted) {
      if (p.object_id) fail("rejected click cannot hit an object");
      return;
    }
    need_open_set(true);
    if (owner_of(views_, p.view) != p.operator_id) fail("accepted click on a view the operator does not own");
    if (p.object_id) {
      const auto it = live_.find(*p.object_id);
      if (it == live_.end() || it->second.first != p.view) fail("click hits an object that is not live");
      pending_ = std::make_pair(p.operator_id, it->second.second == ObjectKind::kAbnormal ? 1 : -3);
      live_.erase(it);
    } else {
      for (const auto& [id, obj] : live_) {
        if (obj.first == p.view) fail("click recorded as a miss while object " + std::to_string(id) + " was live");
      }
    }
  }
  void on(const ev::ScoreUpdate& p) {
    if (p.delta != 1 && p.delta != -3) fail("score delta must be +1 or -3");
    if (!pending_ || pending_->first != p.operator_id || pending_->second != p.delta) {
      fail("score_update does not match the preceding hit");
    }
    pending_.reset();
    auto& l = result_.ledger;
    l.team_total += p.delta;
    l.operator_totals[static_cast<std::size_t>(p.operator_id)] += p.delta;
    l.set_totals[static_cast<std::size_t>(task_index_ * config_.sets_per_task + set_ - 1)] += p.delta;
    (p.delta > 0 ? l.abnormal_hits : l.normal_hits) += 1;
    if (p.team_total != l.team_total) fail("team_total disagrees with the replayed ledger");
  }
  void on(const ev::IsaPrompt& p) {
    need_open_set(false);
    check_operator(p.operator_id);
    if (!isa_open_.insert(p.operator_id).second) fail("isa_prompt already open");
  }
  void on(const ev::IsaResponse& p) {
    check_operator(p.operator_id);
    if (isa_open_.erase(p.operator_id) == 0) fail("isa_response without an open isa_prompt");
    if (p.score < -2 || p.score > 2) fail("isa score out of range");
  }
  void on(const ev::PredictionSample& p) {
    need_open_set(false);
    check_operator(p.operator_id);
  }
  void on(const ev::ApprovalPrompt& p) {
    need_open_set(false);
    check_operator(p.operator_id);
    if (!approval_open_.insert(p.operator_id).second) fail("approval_prompt already open");
  }
  void on(const ev::ApprovalDecision& p) {
    check_operator(p.operator_id);
    if (approval_open_.erase(p.operator_id) == 0) fail("approval_decision without an open approval_prompt");
  }
  void on(const ev::ReallocationApplied& p) {
    need_open_set(false);
    check_views(p.views);
    views_ = p.views;
  }
  void on(const ev::SetEnd& p) {
    need_open_set(true);
    if (p.task_index != task_index_ || p.set != set_) fail("set_end does not match set_start");
    if (!live_.empty()) fail("objects still live at set_end");
    in_set_ = false;
    ++sets_in_task_;
  }
  void on(const ev::SurveySubmitted& p) { check_operator(p.operator_id); }
  void on(const ev::TaskEnd& p) {
    need_open_set(false);
    if (p.task_index != task_index_ || sets_in_task_ != config_.sets_per_task) {
      fail("task_end before all sets ran");
    }
  }
  void on(const ev::SessionEnd& p) {
    if (p.completed && in_set_) fail("completed session ends inside a set");
    result_.ended = true;
  }

  std::size_t line_ = 0;
  bool seen_any_ = false;
  bool started_ = false;
  std::int64_t prev_t_ = 0;
  std::int64_t prev_seq_ = 0;
  SessionConfig config_;
  std::vector<int> views_;
  bool in_set_ = false;
  int task_index_ = 0;
  int set_ = 0;
  int sets_in_task_ = 0;
  std::map<int, std::pair<int, ObjectKind>> live_;
  std::set<int> isa_open_;
  std::set<int> approval_open_;
  std::optional<std::pair<int, int>> pending_;
  ReplayResult result_;
};

}  // namespace

ReplayResult replay(std::istream& jsonl) {
  Replayer r;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(jsonl, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    SessionEvent e;
    try {
      e = event_from_json(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& err) {
      throw ReplayError(line_no, std::string("malformed event: ") + err.what());
    } catch (const ConfigError& err) {
      throw ReplayError(line_no, std::string("malformed event: ") + err.what());
    }
    r.feed(line_no, e);
  }
  return r.finish();
}

ReplayResult replay(const std::vector<SessionEvent>& events) {
  Replayer r;
  for (std::size_t i = 0; i < events.size(); ++i) r.feed(i + 1, events[i]);
  return r.finish();
}

// ---- engine ---------------------------------------------------------------------

SessionEngine::SessionEngine(std::string id, SessionConfig config, std::uint64_t seed,
                             std::unique_ptr<WorkloadPredictor> predictor,
                             std::shared_ptr<const AllocationPolicy> policy, HpmParams hpm)
    : id_(std::move(id)),
      config_(std::move(config)),
      seed_(seed),
      hpm_(std::move(hpm)),
      predictor_(std::move(predictor)),
      policy_(std::move(policy)),
      rng_(derive_seed(seed, 3)) {
  config_.validate();
  hpm_.validate();
  env_config_ = config_.env_config();
  if (const auto* params = dynamic_cast<const PolicyParams*>(policy_.get()); params != nullptr) {
    check_policy_shape(*params, env_config_);
  }
  for (char t : config_.task_plan) tasks_.push_back(task_spec(t));
  schedule_ = draw_schedule(config_, derive_seed(seed, 1));
  fallback_predictor_ = std::make_unique<SimulatedOperatorPredictor>(
      config_.n_operators, config_.kappa, config_.predictor_noise, derive_seed(seed, 2));
  views_ = equal_split(env_config_).views;
  const auto n = static_cast<std::size_t>(config_.n_operators);
  last_isa_.assign(n, 0);
  s_subj_.assign(n, 0.5);
  s_obj_.assign(n, 0.5);
  ledger_.operator_totals.assign(n, 0);
  ledger_.set_totals.assign(tasks_.size() * static_cast<std::size_t>(config_.sets_per_task), 0);
}

void SessionEngine::add_listener(Listener listener) {
  for (const auto& e : events_) listener(e);
  listeners_.push_back(std::move(listener));
}

std::int64_t SessionEngine::ms(double seconds) const noexcept {
  return static_cast<std::int64_t>(std::llround(seconds * 1000.0));
}

std::int64_t SessionEngine::input_time(std::int64_t t_ms) const noexcept {
  return std::max(t_ms, clock_);
}

void SessionEngine::check_operator(int operator_id) const {
  if (operator_id < 0 || operator_id >= config_.n_operators) {
    throw ConfigError("unknown operator " + std::to_string(operator_id));
  }
}

void SessionEngine::emit(std::int64_t t, EventPayload payload) {
  SessionEvent e{++seq_, t, std::move(payload)};
  events_.push_back(e);
  for (const auto& l : listeners_) l(events_.back());
}

std::vector<int> SessionEngine::assigned_views(int operator_id) const {
  check_operator(operator_id);
  std::vector<int> out;
  int start = 0;
  for (int i = 0; i < operator_id; ++i) start += views_[static_cast<std::size_t>(i)];
  for (int v = 0; v < views_[static_cast<std::size_t>(operator_id)]; ++v) out.push_back(start + v);
  return out;
}

std::vector<LiveObject> SessionEngine::live_objects() const {
  std::vector<LiveObject> out;
  for (const auto& [id, obj] : live_) out.push_back(obj);
  return out;
}

bool SessionEngine::isa_pending(int operator_id) const {
  check_operator(operator_id);
  return phase_ == SessionPhase::kIsaSession && !isa_answers_[static_cast<std::size_t>(operator_id)];
}

bool SessionEngine::approval_pending(int operator_id) const {
  check_operator(operator_id);
  return phase_ == SessionPhase::kApprovalSession && !approvals_[static_cast<std::size_t>(operator_id)];
}

void SessionEngine::start(std::int64_t t_ms) {
  if (phase_ != SessionPhase::kCreated) throw StateError("session already started");
  clock_ = t_ms;
  emit(t_ms, ev::SessionStart{session_config_to_json(config_), seed_});
  begin_task(t_ms);
}

void SessionEngine::begin_task(std::int64_t t) {
  const TaskSpec& task = current_task();
  emit(t, ev::TaskStart{task_index_, task.letter, std::string(to_string(task.strategy))});
  set_ = 0;
  std::vector<int> views = equal_split(env_config_).views;
  if (task.strategy == StrategyKind::kFixedNegotiated) {
    // Consensus step: the negotiated split is fixed for the whole task.
    Allocator negotiator(task.strategy, env_config_, hpm_);
    negotiator.begin_episode(model_state());
    views = negotiator.propose(model_state(), rng_).proposed.views;
  }
  if (views != views_) apply_reallocation(t, views);
  begin_set(t);
}

void SessionEngine::begin_set(std::int64_t t) {
  ++set_;
  phase_ = SessionPhase::kPlaying;
  set_start_ms_ = t;
  next_spawn_ = 0;
  emit(t, ev::SetStart{task_index_, set_, views_});
}

void SessionEngine::end_set(std::int64_t t) {
  while (!live_.empty()) {
    const auto it = live_.begin();
    emit(t, ev::ObjectExpire{it->second.object_id, it->second.view});
    live_.erase(it);
  }
  emit(t, ev::SetEnd{task_index_, set_});
  break_start_ms_ = t;
  if (set_ < config_.sets_per_task) {
    const TaskSpec& task = current_task();
    if (task.fixed) {
      enter_break_wait(t);
    } else if (task.isa_session) {
      begin_isa(t);
    } else {
      run_prediction_and_propose(t);
    }
    return;
  }
  emit(t, ev::TaskEnd{task_index_});
  ++task_index_;
  if (task_index_ >= static_cast<int>(tasks_.size())) {
    phase_ = SessionPhase::kEnded;
    emit(t, ev::SessionEnd{true});
    return;
  }
  enter_break_wait(t);
}

void SessionEngine::begin_isa(std::int64_t t) {
  phase_ = SessionPhase::kIsaSession;
  phase_deadline_ms_ = t + ms(config_.isa_window_s);
  isa_answers_.assign(static_cast<std::size_t>(config_.n_operators), std::nullopt);
  for (int op = 0; op < config_.n_operators; ++op) emit(t, ev::IsaPrompt{op, phase_deadline_ms_});
}

void SessionEngine::finish_isa(std::int64_t t) {
  for (int op = 0; op < config_.n_operators; ++op) {
    auto& answer = isa_answers_[static_cast<std::size_t>(op)];
    if (!answer) {
      // Unanswered prompts reuse the operator's previous rating (0 at first).
      answer = last_isa_[static_cast<std::size_t>(op)];
      emit(t, ev::IsaResponse{op, *answer, true});
    }
    last_isa_[static_cast<std::size_t>(op)] = *answer;
    s_subj_[static_cast<std::size_t>(op)] = isa_to_workload(IsaScore{*answer}).value();
  }
  run_prediction_and_propose(t);
}

TeamState SessionEngine::model_state() const {
  TeamState state;
  for (std::size_t i = 0; i < views_.size(); ++i) {
    state.operators.push_back({WorkloadLevel::clamped(s_subj_[i]), WorkloadLevel::clamped(s_obj_[i]), views_[i]});
  }
  state.set_index = set_;
  state.team_perf = evaluate_team(state, hpm_);
  return state;
}

void SessionEngine::run_prediction_and_propose(std::int64_t t) {
  const TaskSpec& task = current_task();
  if (task.prediction_session) {
    for (int op = 0; op < config_.n_operators; ++op) {
      PredictionRequest req{id_, op, t, task_index_, set_, views_[static_cast<std::size_t>(op)],
                            config_.total_views, config_.n_operators};
      WorkloadPredictor* source = predictor_ ? predictor_.get() : fallback_predictor_.get();
      std::string source_name = source->name();
      WorkloadLevel w;
      try {
        w = source->predict(req);
      } catch (const Error&) {
        w = fallback_predictor_->predict(req);
        source_name = "fallback:" + fallback_predictor_->name();
      }
      s_obj_[static_cast<std::size_t>(op)] = w.value();
      emit(t, ev::PredictionSample{op, w.value(), source_name});
    }
  }
  Allocator allocator(task.strategy, env_config_, hpm_, policy_, true);
  const AllocationProposal proposal = allocator.propose(model_state(), rng_);
  if (task.approval_session) {
    phase_ = SessionPhase::kApprovalSession;
    phase_deadline_ms_ = t + ms(config_.approval_window_s);
    approvals_.assign(static_cast<std::size_t>(config_.n_operators), std::nullopt);
    pending_proposal_ = proposal;
    for (int op = 0; op < config_.n_operators; ++op) {
      emit(t, ev::ApprovalPrompt{op, proposal.current.views, proposal.proposed.views,
                                 proposal.predicted_gain, phase_deadline_ms_});
    }
    return;
  }
  apply_reallocation(t, proposal.proposed.views);
  enter_break_wait(t);
}

void SessionEngine::finish_approval(std::int64_t t) {
  bool all_accept = true;
  for (int op = 0; op < config_.n_operators; ++op) {
    auto& d = approvals_[static_cast<std::size_t>(op)];
    if (!d) {
      d = false;
      emit(t, ev::ApprovalDecision{op, false, true});
    }
    all_accept = all_accept && *d;
  }
  const AllocationProposal proposal = *pending_proposal_;
  pending_proposal_.reset();
  // A rejected (or expired) approval leaves the workload unaltered.
  apply_reallocation(t, all_accept ? proposal.proposed.views : proposal.current.views);
  enter_break_wait(t);
}

void SessionEngine::apply_reallocation(std::int64_t t, const std::vector<int>& views) {
  if (!is_feasible(AllocationAction{views}, env_config_)) {
    throw StateError("reallocation to an infeasible assignment");
  }
  const bool changed = views != views_;
  views_ = views;
  emit(t, ev::ReallocationApplied{views_, changed});
}

void SessionEngine::enter_break_wait(std::int64_t t) {
  phase_ = SessionPhase::kBreak;
  phase_deadline_ms_ = std::max(t, break_start_ms_ + ms(config_.break_s));
}

std::optional<std::int64_t> SessionEngine::next_deadline() const {
  switch (phase_) {
    case SessionPhase::kCreated:
    case SessionPhase::kEnded:
      return std::nullopt;
    case SessionPhase::kPlaying: {
      std::int64_t due = set_start_ms_ + ms(config_.set_duration_s);
      const auto& objects = schedule_.sets[static_cast<std::size_t>(task_index_)][static_cast<std::size_t>(set_ - 1)];
      if (next_spawn_ < objects.size()) due = std::min(due, set_start_ms_ + objects[next_spawn_].spawn_offset_ms);
      for (const auto& [id, obj] : live_) due = std::min(due, obj.expires_ms);
      return due;
    }
    case SessionPhase::kIsaSession:
    case SessionPhase::kApprovalSession:
    case SessionPhase::kBreak:
      return phase_deadline_ms_;
  }
  return std::nullopt;
}

void SessionEngine::fire_next(std::int64_t due) {
  clock_ = std::max(clock_, due);
  switch (phase_) {
    case SessionPhase::kPlaying: {
      // Same-instant order: expiries, then spawns, then the end of the set.
      const LiveObject* expiring = nullptr;
      for (const auto& [id, obj] : live_) {
        if (obj.expires_ms <= due) {
          expiring = &obj;
          break;
        }
      }
      if (expiring != nullptr) {
        const int id = expiring->object_id;
        emit(due, ev::ObjectExpire{id, expiring->view});
        live_.erase(id);
        return;
      }
      const auto& objects = schedule_.sets[static_cast<std::size_t>(task_index_)][static_cast<std::size_t>(set_ - 1)];
      if (next_spawn_ < objects.size() && set_start_ms_ + objects[next_spawn_].spawn_offset_ms <= due) {
        const ScheduledObject& o = objects[next_spawn_++];
        live_[o.object_id] = LiveObject{o.object_id, o.view, o.kind, due + o.dwell_ms};
        emit(due, ev::ObjectSpawn{o.object_id, o.view, o.kind});
        return;
      }
      end_set(due);
      return;
    }
    case SessionPhase::kIsaSession:
      finish_isa(due);
      return;
    case SessionPhase::kApprovalSession:
      finish_approval(due);
      return;
    case SessionPhase::kBreak:
      if (set_ >= config_.sets_per_task) {
        begin_task(due);
      } else {
        begin_set(due);
      }
      return;
    case SessionPhase::kCreated:
    case SessionPhase::kEnded:
      return;
  }
}

void SessionEngine::advance_to(std::int64_t t_ms) {
  while (true) {
    const auto due = next_deadline();
    if (!due || *due > t_ms) break;
    fire_next(*due);
  }
  clock_ = std::max(clock_, t_ms);
}

ClickOutcome SessionEngine::handle_click(int operator_id, int view, std::int64_t t_ms,
                                         std::optional<int> object_id) {
  check_operator(operator_id);
  const std::int64_t t = input_time(t_ms);
  advance_to(t);
  ClickOutcome out;
  out.team_total = ledger_.team_total;
  const auto reject = [&](std::string reason) {
    out.reason = reason;
    emit(t, ev::Click{operator_id, view, std::nullopt, false, std::move(reason)});
    return out;
  };
  // Before start there is no log to write to; the click is simply refused.
  if (phase_ == SessionPhase::kCreated) {
    out.reason = "no active set";
    return out;
  }
  if (phase_ != SessionPhase::kPlaying) return reject("no active set");
  if (owner_of(views_, view) != operator_id) return reject("view not assigned to operator");

  out.accepted = true;
  const LiveObject* target = nullptr;
  if (object_id) {
    const auto it = live_.find(*object_id);
    if (it != live_.end() && it->second.view == view) target = &it->second;
  }
  if (target == nullptr) {
    for (const auto& [id, obj] : live_) {
      if (obj.view == view) {
        target = &obj;
        break;
      }
    }
  }
  if (target == nullptr) {
    emit(t, ev::Click{operator_id, view, std::nullopt, true, {}});
    return out;
  }
  const int hit = target->object_id;
  out.object_id = hit;
  out.delta = target->kind == ObjectKind::kAbnormal ? 1 : -3;
  live_.erase(hit);
  emit(t, ev::Click{operator_id, view, hit, true, {}});

  ledger_.team_total += out.delta;
  ledger_.operator_totals[static_cast<std::size_t>(operator_id)] += out.delta;
  ledger_.set_totals[static_cast<std::size_t>(task_index_ * config_.sets_per_task + set_ - 1)] += out.delta;
  (out.delta > 0 ? ledger_.abnormal_hits : ledger_.normal_hits) += 1;
  out.team_total = ledger_.team_total;
  emit(t, ev::ScoreUpdate{operator_id, out.delta, ledger_.team_total});
  return out;
}

void SessionEngine::submit_isa(int operator_id, IsaScore score, std::int64_t t_ms) {
  check_operator(operator_id);
  const std::int64_t t = input_time(t_ms);
  advance_to(t);
  if (!isa_pending(operator_id)) throw StateError("no open ISA prompt for this operator");
  isa_answers_[static_cast<std::size_t>(operator_id)] = score.value();
  emit(t, ev::IsaResponse{operator_id, score.value(), false});
  const bool all = std::all_of(isa_answers_.begin(), isa_answers_.end(),
                               [](const auto& a) { return a.has_value(); });
  if (all) finish_isa(t);
}

void SessionEngine::submit_approval(int operator_id, bool accept, std::int64_t t_ms) {
  check_operator(operator_id);
  const std::int64_t t = input_time(t_ms);
  advance_to(t);
  if (!approval_pending(operator_id)) throw StateError("no open approval prompt for this operator");
  approvals_[static_cast<std::size_t>(operator_id)] = accept;
  emit(t, ev::ApprovalDecision{operator_id, accept, false});
  const bool all = std::all_of(approvals_.begin(), approvals_.end(),
                               [](const auto& a) { return a.has_value(); });
  if (all) finish_approval(t);
}

void SessionEngine::submit_survey(int operator_id, SurveyKind kind, nlohmann::json payload,
                                  std::int64_t t_ms) {
  check_operator(operator_id);
  if (phase_ == SessionPhase::kCreated) throw StateError("session has not started");
  const std::int64_t t = input_time(t_ms);
  advance_to(t);
  emit(t, ev::SurveySubmitted{operator_id, kind, std::move(payload)});
}

void SessionEngine::abort(std::int64_t t_ms) {
  if (phase_ == SessionPhase::kEnded) return;
  const std::int64_t t = input_time(t_ms);
  if (phase_ != SessionPhase::kCreated) {
    emit(t, ev::SessionEnd{false});
  }
  phase_ = SessionPhase::kEnded;
}

nlohmann::json SessionEngine::state_json() const {
  nlohmann::json j = {{"id", id_},
                      {"phase", to_string(phase_)},
                      {"clock", clock_},
                      {"task_index", task_index_},
                      {"set", set_},
                      {"views", views_},
                      {"team_score", ledger_.team_total},
                      {"events", events_.size()},
                      {"schema_version", kSessionSchemaVersion}};
  if (task_index_ < static_cast<int>(tasks_.size())) {
    j["task"] = std::string(1, current_task().letter);
  }
  if (phase_ == SessionPhase::kEnded) {
    j["operator_scores"] = ledger_.operator_totals;
    j["set_scores"] = ledger_.set_totals;
  }
  return j;
}

EventLogWriter::EventLogWriter(const std::filesystem::path& path)
    : path_(path), out_(path, std::ios::app) {
  if (!out_) throw IoError("cannot open event log " + path.string());
}

void EventLogWriter::write(const SessionEvent& e) {
  out_ << to_json(e).dump() << '\n';
  out_.flush();
  if (!out_) throw IoError("failed writing event log " + path_.string());
}

}  // namespace awac
