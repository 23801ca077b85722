#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "awac/session.hpp"

using namespace awac;

namespace {

// Fixed per-operator workloads; optionally fails every call.
class StubPredictor final : public WorkloadPredictor {
 public:
  StubPredictor(std::vector<double> levels, bool fail = false) : levels_(std::move(levels)), fail_(fail) {}
  WorkloadLevel predict(const PredictionRequest& r) override {
    ++calls;
    if (fail_) throw IoError("predictor offline");
    return WorkloadLevel(levels_.at(static_cast<std::size_t>(r.operator_id)));
  }
  std::string name() const override { return "stub"; }
  int calls = 0;

 private:
  std::vector<double> levels_;
  bool fail_;
};

SessionConfig short_config(std::vector<char> plan) {
  SessionConfig c;
  c.task_plan = std::move(plan);
  c.set_duration_s = 20.0;
  c.isa_window_s = 5.0;
  c.approval_window_s = 5.0;
  c.break_s = 8.0;
  return c;
}

template <typename T>
std::vector<T> events_of(const SessionEngine& e) {
  std::vector<T> out;
  for (const auto& ev : e.events()) {
    if (const auto* p = std::get_if<T>(&ev.payload)) out.push_back(*p);
  }
  return out;
}

// Advances through every timer without user input.
void run_to_end(SessionEngine& e) {
  while (auto d = e.next_deadline()) e.advance_to(*d);
}

std::string to_jsonl(const std::vector<SessionEvent>& events) {
  std::string out;
  for (const auto& e : events) out += to_json(e).dump() + "\n";
  return out;
}

std::int64_t set_start_time(const SessionEngine& e) {
  for (auto it = e.events().rbegin(); it != e.events().rend(); ++it) {
    if (std::holds_alternative<ev::SetStart>(it->payload)) return it->t_ms;
  }
  return -1;
}

}  // namespace

TEST_CASE("session config validation and JSON") {
  SessionConfig c;
  CHECK_NOTHROW(c.validate());
  const SessionConfig back = session_config_from_json(session_config_to_json(c));
  CHECK(back.task_plan == c.task_plan);
  CHECK(back.set_duration_s == c.set_duration_s);
  CHECK(back.max_views == 5);  // written resolved

  const SessionConfig partial = session_config_from_json({{"task_plan", "ADFH"}, {"sets_per_task", 2}});
  CHECK(partial.task_plan == std::vector<char>{'A', 'D', 'F', 'H'});
  CHECK(partial.sets_per_task == 2);
  CHECK(partial.break_s == c.break_s);

  CHECK_THROWS_AS(session_config_from_json({{"no_such_key", 1}}), ConfigError);
  SessionConfig bad = c;
  bad.task_plan = {'Z'};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.set_duration_s = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.total_views = 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("schedule: deterministic, ordered, sequential ids") {
  const SessionConfig c = short_config({'A', 'G'});
  const AnomalySchedule a = draw_schedule(c, 42);
  CHECK(a == draw_schedule(c, 42));
  CHECK_FALSE(a == draw_schedule(c, 43));
  REQUIRE(a.sets.size() == 2);
  int expected_id = 1;
  for (const auto& task : a.sets) {
    REQUIRE(task.size() == 3);
    for (const auto& set : task) {
      std::int64_t prev = 0;
      for (const auto& o : set) {
        CHECK(o.object_id == expected_id++);
        CHECK(o.spawn_offset_ms >= prev);
        CHECK(o.spawn_offset_ms <= 20000);
        CHECK(o.dwell_ms == 4000);
        CHECK(o.view >= 0);
        CHECK(o.view < c.total_views);
        prev = o.spawn_offset_ms;
      }
    }
  }
  CHECK(a.total_objects() == static_cast<std::size_t>(expected_id - 1));
}

TEST_CASE("schedule: zero rates give no objects") {
  SessionConfig c = short_config({'A'});
  c.abnormal_rate = 0.0;
  c.normal_rate = 0.0;
  CHECK(draw_schedule(c, 1).total_objects() == 0);
}

TEST_CASE("schedule: Poisson arrival counts have the configured mean") {
  SessionConfig c;
  c.task_plan = {'A'};
  c.sets_per_task = 1;
  c.set_duration_s = 100.0;
  const int draws = 1000;
  double abnormal = 0.0;
  double normal = 0.0;
  for (int s = 0; s < draws; ++s) {
    const AnomalySchedule sched = draw_schedule(c, static_cast<std::uint64_t>(s));
    for (const auto& o : sched.sets[0][0]) {
      (o.kind == ObjectKind::kAbnormal ? abnormal : normal) += 1.0;
    }
  }
  // Expected per set: rate/60 * duration * views.
  const double ea = 3.0 / 60.0 * 100.0 * 6.0;
  const double en = 1.5 / 60.0 * 100.0 * 6.0;
  CHECK(std::abs(abnormal / draws - ea) < 3.0 * std::sqrt(ea / draws));
  CHECK(std::abs(normal / draws - en) < 3.0 * std::sqrt(en / draws));
}

TEST_CASE("clicks score +1, -3 or nothing, and foreign views are rejected") {
  SessionEngine e("s", short_config({'A'}), 5);
  CHECK(e.phase() == SessionPhase::kCreated);
  const ClickOutcome early = e.handle_click(0, 0, 0);
  CHECK_FALSE(early.accepted);
  CHECK(early.reason == "no active set");
  CHECK(e.events().empty());

  e.start(1000);
  CHECK(e.phase() == SessionPhase::kPlaying);
  CHECK(e.views() == std::vector<int>{3, 3});
  CHECK(e.assigned_views(0) == std::vector<int>{0, 1, 2});
  CHECK(e.assigned_views(1) == std::vector<int>{3, 4, 5});
  const std::int64_t t0 = set_start_time(e);
  CHECK(t0 == 1000);

  const auto& objects = e.schedule().sets[0][0];
  const ScheduledObject* abnormal = nullptr;
  const ScheduledObject* normal = nullptr;
  for (const auto& o : objects) {
    if (o.kind == ObjectKind::kAbnormal && !abnormal) abnormal = &o;
    if (o.kind == ObjectKind::kNormal && !normal) normal = &o;
  }
  REQUIRE(abnormal != nullptr);
  REQUIRE(normal != nullptr);

  const auto click_on = [&](const ScheduledObject& o) {
    const std::int64_t t = std::max(e.clock(), t0 + o.spawn_offset_ms);
    e.advance_to(t);
    const int op = o.view < 3 ? 0 : 1;
    return e.handle_click(op, o.view, t, o.object_id);
  };

  const ClickOutcome hit = click_on(*abnormal);
  CHECK(hit.accepted);
  CHECK(hit.delta == 1);
  CHECK(hit.object_id == abnormal->object_id);
  const int after_hit = e.ledger().team_total;
  CHECK(after_hit == 1);

  const ClickOutcome bad = click_on(*normal);
  if (bad.object_id == normal->object_id) {
    CHECK(bad.delta == -3);
    CHECK(e.ledger().team_total == after_hit - 3);
  }

  // Operator 0 cannot act on operator 1's views.
  const ClickOutcome foreign = e.handle_click(0, 5, e.clock());
  CHECK_FALSE(foreign.accepted);
  CHECK(foreign.delta == 0);
  CHECK_THROWS_AS(e.handle_click(7, 0, e.clock()), ConfigError);

  // A click on an empty view is accepted and scores nothing.
  const std::int64_t before = e.ledger().team_total;
  bool found_empty = false;
  for (int v = 0; v < 3 && !found_empty; ++v) {
    bool busy = false;
    for (const auto& o : e.live_objects()) busy = busy || o.view == v;
    if (!busy) {
      const ClickOutcome miss = e.handle_click(0, v, e.clock());
      CHECK(miss.accepted);
      CHECK(miss.delta == 0);
      CHECK_FALSE(miss.object_id.has_value());
      found_empty = true;
    }
  }
  CHECK(e.ledger().team_total == before);

  run_to_end(e);
  CHECK(e.phase() == SessionPhase::kEnded);
  CHECK(replay(e.events()).ledger == e.ledger());
}

TEST_CASE("fixed task: no prompts and a constant split") {
  SessionEngine e("s", short_config({'A'}), 9);
  e.start(0);
  run_to_end(e);
  CHECK(events_of<ev::IsaPrompt>(e).empty());
  CHECK(events_of<ev::ApprovalPrompt>(e).empty());
  CHECK(events_of<ev::PredictionSample>(e).empty());
  CHECK(events_of<ev::SetStart>(e).size() == 3);
  for (const auto& s : events_of<ev::SetStart>(e)) CHECK(s.views == std::vector<int>{3, 3});
  const auto ends = events_of<ev::SessionEnd>(e);
  REQUIRE(ends.size() == 1);
  CHECK(ends[0].completed);
  // Objects all expire unclicked: nothing scored.
  CHECK(e.ledger().team_total == 0);
  CHECK(events_of<ev::ObjectSpawn>(e).size() == e.schedule().total_objects());
  CHECK(events_of<ev::ObjectExpire>(e).size() == e.schedule().total_objects());
}

TEST_CASE("breaks respect the minimum gap between sets") {
  SessionEngine e("s", short_config({'A'}), 1);
  e.start(0);
  run_to_end(e);
  std::vector<std::int64_t> starts;
  std::vector<std::int64_t> ends;
  for (const auto& ev : e.events()) {
    if (std::holds_alternative<ev::SetStart>(ev.payload)) starts.push_back(ev.t_ms);
    if (std::holds_alternative<ev::SetEnd>(ev.payload)) ends.push_back(ev.t_ms);
  }
  REQUIRE(starts.size() == 3);
  CHECK(ends[0] == starts[0] + 20000);
  CHECK(starts[1] == ends[0] + 8000);
  CHECK(starts[2] == ends[1] + 8000);
}

TEST_CASE("approval task: reject and timeout keep the split") {
  for (bool timeout : {false, true}) {
    CAPTURE(timeout);
    SessionEngine e("s", short_config({'G'}), 3,
                    std::make_unique<StubPredictor>(std::vector<double>{0.95, 0.05}));
    e.start(0);
    e.advance_to(20000);
    CHECK(e.phase() == SessionPhase::kIsaSession);
    CHECK(e.isa_pending(0));
    e.submit_isa(0, IsaScore(2), 20100);
    e.submit_isa(1, IsaScore(-2), 20200);
    CHECK(e.phase() == SessionPhase::kApprovalSession);
    const auto prompts = events_of<ev::ApprovalPrompt>(e);
    REQUIRE(prompts.size() == 2);
    CHECK(prompts[0].current == std::vector<int>{3, 3});
    CHECK(prompts[0].proposed != prompts[0].current);
    if (timeout) {
      e.advance_to(e.clock() + 5000);
      const auto d = events_of<ev::ApprovalDecision>(e);
      REQUIRE(d.size() == 2);
      CHECK(d[0].timed_out);
      CHECK_FALSE(d[0].accept);
    } else {
      e.submit_approval(0, true, 20300);
      e.submit_approval(1, false, 20400);
    }
    CHECK(e.phase() == SessionPhase::kBreak);
    const auto re = events_of<ev::ReallocationApplied>(e);
    REQUIRE_FALSE(re.empty());
    CHECK_FALSE(re.back().changed);
    CHECK(e.views() == std::vector<int>{3, 3});
    CHECK_THROWS_AS(e.submit_approval(0, true, e.clock()), StateError);
  }
}

TEST_CASE("approval task: unanimous acceptance applies the proposal") {
  SessionEngine e("s", short_config({'G'}), 3,
                  std::make_unique<StubPredictor>(std::vector<double>{0.95, 0.05}));
  e.start(0);
  e.advance_to(20000);
  e.submit_isa(0, IsaScore(2), 20000);
  e.submit_isa(1, IsaScore(-2), 20000);
  const auto proposed = events_of<ev::ApprovalPrompt>(e).front().proposed;
  e.submit_approval(0, true, 20500);
  e.submit_approval(1, true, 20600);
  CHECK(e.views() == proposed);
  CHECK(e.views()[0] < 3);  // load moves away from the overloaded operator
  e.advance_to(28000);
  CHECK(e.phase() == SessionPhase::kPlaying);
  CHECK(events_of<ev::SetStart>(e).back().views == proposed);
  const auto samples = events_of<ev::PredictionSample>(e);
  REQUIRE(samples.size() == 2);
  CHECK(samples[0].source == "stub");
  CHECK(samples[0].workload == doctest::Approx(0.95));
}

TEST_CASE("adaptive task without approval reallocates directly") {
  SessionEngine e("s", short_config({'H'}), 3,
                  std::make_unique<StubPredictor>(std::vector<double>{0.95, 0.05}));
  e.start(0);
  e.advance_to(20000);
  e.submit_isa(0, IsaScore(2), 20000);
  e.submit_isa(1, IsaScore(-2), 20000);
  CHECK(e.phase() == SessionPhase::kBreak);
  CHECK(events_of<ev::ApprovalPrompt>(e).empty());
  const auto re = events_of<ev::ReallocationApplied>(e);
  REQUIRE(re.size() == 1);
  CHECK(re[0].changed);
  CHECK(e.views()[0] < 3);
}

TEST_CASE("ISA prompts default to the previous answer on timeout") {
  SessionEngine e("s", short_config({'D'}), 4);
  e.start(0);
  e.advance_to(20000);
  REQUIRE(e.phase() == SessionPhase::kIsaSession);
  e.submit_isa(1, IsaScore(1), 21000);
  CHECK_THROWS_AS(e.submit_isa(1, IsaScore(2), 21500), StateError);
  e.advance_to(25000);
  auto r = events_of<ev::IsaResponse>(e);
  REQUIRE(r.size() == 2);
  CHECK(r[1].operator_id == 0);
  CHECK(r[1].defaulted);
  CHECK(r[1].score == 0);

  // Second break: operator 1 says nothing and keeps its earlier rating.
  while (e.phase() != SessionPhase::kIsaSession) e.advance_to(*e.next_deadline());
  e.submit_isa(0, IsaScore(-1), e.clock());
  e.advance_to(*e.next_deadline());
  r = events_of<ev::IsaResponse>(e);
  REQUIRE(r.size() == 4);
  CHECK(r[3].operator_id == 1);
  CHECK(r[3].defaulted);
  CHECK(r[3].score == 1);
}

TEST_CASE("phase machine across a mixed plan") {
  // A break longer than both prompt windows leaves a visible wait after them.
  SessionConfig c = short_config({'A', 'G'});
  c.break_s = 30.0;
  SessionEngine e("s", c, 6);
  CHECK_THROWS_AS(e.submit_isa(0, IsaScore(0), 0), StateError);
  CHECK_THROWS_AS(e.submit_survey(0, SurveyKind::kSam, {}, 0), StateError);
  e.start(0);
  std::vector<SessionPhase> seen{e.phase()};
  while (auto d = e.next_deadline()) {
    e.advance_to(*d);
    if (seen.back() != e.phase()) seen.push_back(e.phase());
  }
  using P = SessionPhase;
  // Task A: play/break x3; task G: play, ISA, approval, break, play, ... then end.
  const std::vector<P> expect{P::kPlaying, P::kBreak, P::kPlaying, P::kBreak, P::kPlaying,
                              P::kBreak, P::kPlaying, P::kIsaSession, P::kApprovalSession,
                              P::kBreak, P::kPlaying, P::kIsaSession, P::kApprovalSession,
                              P::kBreak, P::kPlaying, P::kEnded};
  CHECK(seen == expect);
  CHECK(events_of<ev::TaskStart>(e).size() == 2);
  CHECK(events_of<ev::TaskEnd>(e).size() == 2);
  CHECK(e.next_deadline() == std::nullopt);
}

TEST_CASE("task with a negotiated split applies it at task start") {
  SessionEngine e("s", short_config({'B'}), 2);
  e.start(0);
  const auto ts = events_of<ev::TaskStart>(e);
  REQUIRE(ts.size() == 1);
  CHECK(ts[0].task == 'B');
  run_to_end(e);
  CHECK(events_of<ev::ApprovalPrompt>(e).empty());
  const auto sets = events_of<ev::SetStart>(e);
  REQUIRE(sets.size() == 3);
  CHECK(sets[0].views == sets[1].views);
  CHECK(sets[1].views == sets[2].views);
}

TEST_CASE("predictor failures fall back to the simulated operator model") {
  auto stub = std::make_unique<StubPredictor>(std::vector<double>{0.5, 0.5}, true);
  StubPredictor* raw = stub.get();
  SessionEngine e("s", short_config({'F'}), 8, std::move(stub));
  e.start(0);
  e.advance_to(20000);
  CHECK(raw->calls == 2);
  const auto samples = events_of<ev::PredictionSample>(e);
  REQUIRE(samples.size() == 2);
  CHECK(samples[0].source == "fallback:simulated");
}

TEST_CASE("abort ends the session") {
  SessionEngine e("s", short_config({'A'}), 1);
  e.start(0);
  e.abort(500);
  CHECK(e.phase() == SessionPhase::kEnded);
  const auto ends = events_of<ev::SessionEnd>(e);
  REQUIRE(ends.size() == 1);
  CHECK_FALSE(ends[0].completed);
  CHECK(e.state_json().at("phase") == "ended");
  CHECK_NOTHROW(replay(e.events()));
}

TEST_CASE("events round trip through JSON") {
  SessionEngine e("s", short_config({'G'}), 12);
  e.start(0);
  e.advance_to(20000);
  e.submit_isa(0, IsaScore(1), 20000);
  e.submit_survey(1, SurveyKind::kNasaTlx, {{"mental", 40}}, 20100);
  run_to_end(e);
  for (const auto& ev : e.events()) {
    const auto j = to_json(ev);
    CHECK(j.contains("seq"));
    CHECK(j.contains("t"));
    CHECK(j.at("type") == std::string(ev.type()));
    CHECK(to_json(event_from_json(j)) == j);
  }
  CHECK(to_json(e.events().front()).at("schema_version") == kSessionSchemaVersion);
}

TEST_CASE("replay reproduces the live ledger from JSONL") {
  SessionEngine e("s", short_config({'A', 'H'}), 21);
  e.start(0);
  // Click greedily on whatever is live every 700 ms.
  while (e.phase() != SessionPhase::kEnded) {
    const auto d = e.next_deadline();
    const std::int64_t t = std::min(*d, e.clock() + 700);
    e.advance_to(t);
    if (e.phase() == SessionPhase::kPlaying) {
      for (const auto& o : e.live_objects()) {
        if (o.kind == ObjectKind::kAbnormal || o.object_id % 3 == 0) {
          e.handle_click(o.view < e.views()[0] ? 0 : 1, o.view, t, o.object_id);
          break;
        }
      }
    }
  }
  CHECK(e.ledger().abnormal_hits > 0);
  std::istringstream in(to_jsonl(e.events()));
  const ReplayResult r = replay(in);
  CHECK(r.ledger == e.ledger());
  CHECK(r.final_views == e.views());
  CHECK(r.ended);
  CHECK(r.events == e.events().size());
}

TEST_CASE("replay names the first bad line") {
  SessionEngine e("s", short_config({'A'}), 2);
  e.start(0);
  std::int64_t t = 0;
  for (const auto& o : e.schedule().sets[0][0]) {
    if (o.kind != ObjectKind::kAbnormal) continue;
    t = std::max(t, o.spawn_offset_ms);
    e.advance_to(t);
    if (e.handle_click(o.view < 3 ? 0 : 1, o.view, t, o.object_id).delta == 1) break;
  }
  run_to_end(e);
  const std::string good = to_jsonl(e.events());

  std::vector<std::string> lines;
  std::istringstream split(good);
  for (std::string l; std::getline(split, l);) lines.push_back(l);
  std::size_t score_line = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].find("\"score_update\"") != std::string::npos) score_line = i;
  }
  REQUIRE(score_line > 0);

  const auto join = [](const std::vector<std::string>& ls) {
    std::string s;
    for (const auto& l : ls) s += l + "\n";
    return s;
  };
  const auto bad_line = [](const std::string& text) -> std::size_t {
    std::istringstream in(text);
    try {
      replay(in);
    } catch (const ReplayError& err) {
      return err.line();
    }
    return 0;
  };

  auto tampered = lines;
  auto j = nlohmann::json::parse(tampered[score_line]);
  j["delta"] = 5;
  tampered[score_line] = j.dump();
  CHECK(bad_line(join(tampered)) == score_line + 1);

  auto dropped = lines;
  dropped.erase(dropped.begin() + 3);
  CHECK(bad_line(join(dropped)) == 4);

  auto garbage = lines;
  garbage[2] = "{not json";
  CHECK(bad_line(join(garbage)) == 3);

  auto headless = lines;
  headless.erase(headless.begin());
  CHECK(bad_line(join(headless)) == 1);

  auto trailing = lines;
  trailing.push_back(trailing[1]);
  CHECK(bad_line(join(trailing)) == lines.size() + 1);

  std::istringstream empty("");
  const ReplayResult zero = replay(empty);
  CHECK(zero.ledger.team_total == 0);
  CHECK(zero.events == 0);
  CHECK_FALSE(zero.ended);
}

TEST_CASE("event log writer produces a replayable file") {
  const auto path = std::filesystem::temp_directory_path() /
                    ("awac-log-" + std::to_string(::getpid()) + ".jsonl");
  {
    EventLogWriter w(path);
    SessionEngine e("s", short_config({'D'}), 30);
    e.add_listener([&](const SessionEvent& ev) { w.write(ev); });
    e.start(0);
    run_to_end(e);
    std::ifstream in(path);
    const ReplayResult r = replay(in);
    CHECK(r.ledger == e.ledger());
    CHECK(r.events == e.events().size());
  }
  std::filesystem::remove(path);
  CHECK_THROWS_AS(EventLogWriter("/nonexistent-dir/x.jsonl"), IoError);
}
