#pragma once

// Live session engine for the team surveillance protocol: timed sets over a
// synthetic anomaly stream, +1/-3 scoring, and between-set breaks with ISA,
// prediction and approval sessions that drive workload reallocation.
//
// The engine is a deterministic state machine on a millisecond clock owned by
// the caller (advance_to). Every state change is emitted as a SessionEvent;
// the JSONL event log replays to the same ledger.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "awac/allocator.hpp"
#include "awac/env.hpp"
#include "awac/error.hpp"
#include "awac/hpm.hpp"
#include "awac/predictor.hpp"

namespace awac {

inline constexpr int kSessionSchemaVersion = 1;

struct SessionConfig {
  std::vector<char> task_plan = {'G'};
  double set_duration_s = 100.0;
  double isa_window_s = 10.0;
  double approval_window_s = 10.0;
  double break_s = 20.0;  // minimum gap between SetEnd and the next SetStart
  int sets_per_task = 3;
  int n_operators = 2;
  int total_views = 6;
  int min_views = 1;
  int max_views = 0;  // 0 resolves as in EnvConfig
  double abnormal_rate = 3.0;  // spawns per view per minute
  double normal_rate = 1.5;
  double object_dwell_s = 4.0;
  double kappa = 0.1;              // simulated operator model: workload per view
  double predictor_noise = 0.0;    // simulated operator model noise

  void validate() const;
  EnvConfig env_config() const;
};

nlohmann::json session_config_to_json(const SessionConfig& config);
// Missing keys keep their defaults; unknown keys are rejected.
SessionConfig session_config_from_json(const nlohmann::json& j);

enum class ObjectKind { kAbnormal, kNormal };
enum class SurveyKind { kSam, kIsa, kNasaTlx };

std::string_view to_string(ObjectKind kind) noexcept;
std::string_view to_string(SurveyKind kind) noexcept;
SurveyKind parse_survey_kind(std::string_view s);

struct ScheduledObject {
  int object_id = 0;
  int view = 0;
  ObjectKind kind = ObjectKind::kAbnormal;
  std::int64_t spawn_offset_ms = 0;  // from SetStart
  std::int64_t dwell_ms = 0;

  friend bool operator==(const ScheduledObject&, const ScheduledObject&) = default;
};

// Pre-drawn per-view Poisson arrivals: sets[task][set] sorted by spawn offset.
struct AnomalySchedule {
  std::vector<std::vector<std::vector<ScheduledObject>>> sets;

  std::size_t total_objects() const noexcept;
  friend bool operator==(const AnomalySchedule&, const AnomalySchedule&) = default;
};

AnomalySchedule draw_schedule(const SessionConfig& config, std::uint64_t seed);

// ---- events -----------------------------------------------------------------

namespace ev {

struct SessionStart {
  nlohmann::json config;
  std::uint64_t seed = 0;
};
struct TaskStart {
  int task_index = 0;
  char task = 'A';
  std::string strategy;
};
struct SetStart {
  int task_index = 0;
  int set = 0;  // 1-based within the task
  std::vector<int> views;
};
struct ObjectSpawn {
  int object_id = 0;
  int view = 0;
  ObjectKind kind = ObjectKind::kAbnormal;
};
struct ObjectExpire {
  int object_id = 0;
  int view = 0;
};
struct Click {
  int operator_id = 0;
  int view = 0;
  std::optional<int> object_id;  // object that was hit, if any
  bool accepted = true;
  std::string reason;            // why a click was rejected
};
struct ScoreUpdate {
  int operator_id = 0;
  int delta = 0;
  int team_total = 0;
};
struct IsaPrompt {
  int operator_id = 0;
  std::int64_t deadline_ms = 0;
};
struct IsaResponse {
  int operator_id = 0;
  int score = 0;
  bool defaulted = false;  // prompt expired; previous answer (or 0) was used
};
struct PredictionSample {
  int operator_id = 0;
  double workload = 0.0;
  std::string source;
};
struct ApprovalPrompt {
  int operator_id = 0;
  std::vector<int> current;
  std::vector<int> proposed;
  double predicted_gain = 0.0;
  std::int64_t deadline_ms = 0;
};
struct ApprovalDecision {
  int operator_id = 0;
  bool accept = false;
  bool timed_out = false;
};
struct ReallocationApplied {
  std::vector<int> views;
  bool changed = false;
};
struct SetEnd {
  int task_index = 0;
  int set = 0;
};
struct SurveySubmitted {
  int operator_id = 0;
  SurveyKind kind = SurveyKind::kSam;
  nlohmann::json payload;
};
struct TaskEnd {
  int task_index = 0;
};
struct SessionEnd {
  bool completed = true;
};

}  // namespace ev

using EventPayload =
    std::variant<ev::SessionStart, ev::TaskStart, ev::SetStart, ev::ObjectSpawn, ev::ObjectExpire,
                 ev::Click, ev::ScoreUpdate, ev::IsaPrompt, ev::IsaResponse, ev::PredictionSample,
                 ev::ApprovalPrompt, ev::ApprovalDecision, ev::ReallocationApplied, ev::SetEnd,
                 ev::SurveySubmitted, ev::TaskEnd, ev::SessionEnd>;

struct SessionEvent {
  std::int64_t seq = 0;
  std::int64_t t_ms = 0;
  EventPayload payload;

  std::string_view type() const noexcept;
};

nlohmann::json to_json(const SessionEvent& e);
SessionEvent event_from_json(const nlohmann::json& j);

// ---- ledger and replay --------------------------------------------------------

struct ScoreLedger {
  int team_total = 0;
  std::vector<int> operator_totals;
  std::vector<int> set_totals;  // indexed task_index * sets_per_task + (set - 1)
  int abnormal_hits = 0;
  int normal_hits = 0;

  friend bool operator==(const ScoreLedger&, const ScoreLedger&) = default;
};

class ReplayError : public IoError {
 public:
  ReplayError(std::size_t line, const std::string& what)
      : IoError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

struct ReplayResult {
  ScoreLedger ledger;
  std::vector<int> final_views;
  std::size_t events = 0;
  bool ended = false;
};

// Re-derives every score from spawn/expire/click events and checks the log's
// invariants; throws ReplayError naming the first offending line.
ReplayResult replay(std::istream& jsonl);
ReplayResult replay(const std::vector<SessionEvent>& events);

// ---- engine ---------------------------------------------------------------------

enum class SessionPhase {
  kCreated,
  kPlaying,
  kIsaSession,
  kApprovalSession,
  kBreak,
  kEnded,
};

std::string_view to_string(SessionPhase phase) noexcept;

struct ClickOutcome {
  bool accepted = false;
  int delta = 0;
  std::optional<int> object_id;
  int team_total = 0;
  std::string reason;
};

struct LiveObject {
  int object_id = 0;
  int view = 0;
  ObjectKind kind = ObjectKind::kAbnormal;
  std::int64_t expires_ms = 0;
};

class SessionEngine {
 public:
  using Listener = std::function<void(const SessionEvent&)>;

  SessionEngine(std::string id, SessionConfig config, std::uint64_t seed,
                std::unique_ptr<WorkloadPredictor> predictor = nullptr,
                std::shared_ptr<const AllocationPolicy> policy = nullptr,
                HpmParams hpm = HpmParams::defaults());

  // Listeners see every event in order, including those already emitted.
  void add_listener(Listener listener);

  void start(std::int64_t t_ms);
  // Fires every timer due at or before t_ms.
  void advance_to(std::int64_t t_ms);
  // Earliest pending timer, if any.
  std::optional<std::int64_t> next_deadline() const;

  ClickOutcome handle_click(int operator_id, int view, std::int64_t t_ms,
                            std::optional<int> object_id = std::nullopt);
  void submit_isa(int operator_id, IsaScore score, std::int64_t t_ms);
  void submit_approval(int operator_id, bool accept, std::int64_t t_ms);
  void submit_survey(int operator_id, SurveyKind kind, nlohmann::json payload, std::int64_t t_ms);
  // Ends the session early (service shutdown).
  void abort(std::int64_t t_ms);

  const std::string& id() const noexcept { return id_; }
  const SessionConfig& config() const noexcept { return config_; }
  SessionPhase phase() const noexcept { return phase_; }
  std::int64_t clock() const noexcept { return clock_; }
  const ScoreLedger& ledger() const noexcept { return ledger_; }
  const std::vector<SessionEvent>& events() const noexcept { return events_; }
  const std::vector<int>& views() const noexcept { return views_; }
  const AnomalySchedule& schedule() const noexcept { return schedule_; }
  int task_index() const noexcept { return task_index_; }
  int set() const noexcept { return set_; }
  std::vector<int> assigned_views(int operator_id) const;
  std::vector<LiveObject> live_objects() const;
  bool isa_pending(int operator_id) const;
  bool approval_pending(int operator_id) const;

  // Experimenter view: phase, clock, assignment and team total.
  nlohmann::json state_json() const;

 private:
  void emit(std::int64_t t, EventPayload payload);
  std::int64_t ms(double seconds) const noexcept;
  std::int64_t input_time(std::int64_t t_ms) const noexcept;
  void check_operator(int operator_id) const;

  void begin_task(std::int64_t t);
  void begin_set(std::int64_t t);
  void end_set(std::int64_t t);
  void begin_isa(std::int64_t t);
  void finish_isa(std::int64_t t);
  void run_prediction_and_propose(std::int64_t t);
  void finish_approval(std::int64_t t);
  void apply_reallocation(std::int64_t t, const std::vector<int>& views);
  void enter_break_wait(std::int64_t t);
  void fire_next(std::int64_t due);

  TeamState model_state() const;
  const TaskSpec& current_task() const { return tasks_[static_cast<std::size_t>(task_index_)]; }

  std::string id_;
  SessionConfig config_;
  EnvConfig env_config_;
  std::uint64_t seed_;
  HpmParams hpm_;
  std::unique_ptr<WorkloadPredictor> predictor_;
  std::unique_ptr<WorkloadPredictor> fallback_predictor_;
  std::shared_ptr<const AllocationPolicy> policy_;
  std::vector<TaskSpec> tasks_;
  AnomalySchedule schedule_;

  SessionPhase phase_ = SessionPhase::kCreated;
  std::int64_t clock_ = 0;
  std::int64_t seq_ = 0;
  int task_index_ = 0;
  int set_ = 0;
  std::vector<int> views_;

  // Playing phase.
  std::int64_t set_start_ms_ = 0;
  std::size_t next_spawn_ = 0;
  std::map<int, LiveObject> live_;  // by object id

  // Break phases.
  std::int64_t break_start_ms_ = 0;
  std::int64_t phase_deadline_ms_ = 0;
  std::vector<std::optional<int>> isa_answers_;
  std::vector<int> last_isa_;
  std::vector<std::optional<bool>> approvals_;
  std::optional<AllocationProposal> pending_proposal_;
  std::vector<double> s_subj_;
  std::vector<double> s_obj_;
  Rng rng_;

  ScoreLedger ledger_;
  std::vector<SessionEvent> events_;
  std::vector<Listener> listeners_;
};

// Append-only JSONL writer; each event is flushed as it is written.
class EventLogWriter {
 public:
  explicit EventLogWriter(const std::filesystem::path& path);
  void write(const SessionEvent& e);
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

}  // namespace awac
