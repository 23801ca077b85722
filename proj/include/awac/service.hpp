#pragma once

// HTTP + WebSocket front end for live sessions.
//
// All sessions run on one I/O thread, so each engine has exactly one mutator.
// Routes:
//   GET  /health                       {"service", "version", "schema_version"}
//   GET  /sessions                     ids of known sessions
//   POST /sessions                     {"config": {...}, "seed": n} -> {"id", ...}
//   POST /sessions/{id}/start          start before every operator has connected
//   GET  /sessions/{id}/state          experimenter view
//   GET  /sessions/{id}/log            JSONL event log
//   POST /sessions/{id}/survey         {"operator", "kind", "payload"}
//   WS   /sessions/{id}/ws?operator=k  per-operator message stream
// A session starts on its own once every operator is connected.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "awac/allocator.hpp"
#include "awac/hpm.hpp"
#include "awac/session.hpp"

namespace awac {

struct ServiceConfig {
  std::string bind_address = "127.0.0.1";
  unsigned short port = 8080;  // 0 picks a free port
  std::filesystem::path log_dir = "logs";
  SessionConfig session_defaults;
  std::uint64_t seed = 0;            // used when a create request has no seed
  std::string predictor_url;         // empty: simulated operator model
  std::shared_ptr<const AllocationPolicy> policy;
  HpmParams hpm = HpmParams::defaults();
  int tick_ms = 10;
  bool handle_signals = false;       // stop on SIGINT/SIGTERM
};

// Server-to-client messages that `operator_id` should receive for one engine
// event. `views` is the assignment in force when the event was emitted.
std::vector<nlohmann::json> ws_messages_for(const SessionEvent& e, int operator_id,
                                            const std::vector<int>& views);

class SessionService {
 public:
  explicit SessionService(ServiceConfig config);
  ~SessionService();
  SessionService(const SessionService&) = delete;
  SessionService& operator=(const SessionService&) = delete;

  // Binds and starts the I/O thread. Throws IoError if the address is unusable.
  void start();
  // Ends every running session (logged as incomplete), flushes logs, joins.
  void stop();
  // Blocks until the service stops (signal or stop()).
  void wait();

  unsigned short port() const noexcept;
  bool running() const noexcept;

  struct Impl;  // opaque; shared with connection handlers

 private:
  std::shared_ptr<Impl> impl_;
};

}  // namespace awac
