#include "awac/service.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <ctime>
#include <deque>
#include <map>
#include <mutex>
#include <thread>

#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/signal_set.hpp>
#include <boost/asio/steady_timer.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "awac/error.hpp"
#include "awac/predictor.hpp"
#include "awac/version.hpp"

namespace awac {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;
using json = nlohmann::json;

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

int view_owner(const std::vector<int>& views, int view) {
  int start = 0;
  for (std::size_t i = 0; i < views.size(); ++i) {
    if (view >= start && view < start + views[i]) return static_cast<int>(i);
    start += views[i];
  }
  return -1;
}

std::vector<int> owned_views(const std::vector<int>& views, int op) {
  std::vector<int> out;
  int start = 0;
  for (int i = 0; i < op; ++i) start += views[static_cast<std::size_t>(i)];
  for (int v = 0; v < views[static_cast<std::size_t>(op)]; ++v) out.push_back(start + v);
  return out;
}

json message(std::string_view type, std::int64_t t) { return {{"type", type}, {"t", t}}; }

}  // namespace

std::vector<json> ws_messages_for(const SessionEvent& e, int op, const std::vector<int>& views) {
  std::vector<json> out;
  const std::int64_t t = e.t_ms;
  std::visit(
      Overloaded{
          [&](const ev::SetStart& p) {
            auto m = message("set_start", t);
            m["task_index"] = p.task_index;
            m["set"] = p.set;
            out.push_back(std::move(m));
            auto grid = message("view_grid", t);
            grid["views"] = owned_views(p.views, op);
            out.push_back(std::move(grid));
          },
          [&](const ev::ObjectSpawn& p) {
            if (view_owner(views, p.view) != op) return;
            auto m = message("object_spawn", t);
            m["object_id"] = p.object_id;
            m["view"] = p.view;
            m["kind"] = to_string(p.kind);
            out.push_back(std::move(m));
          },
          [&](const ev::ObjectExpire& p) {
            if (view_owner(views, p.view) != op) return;
            auto m = message("object_expire", t);
            m["object_id"] = p.object_id;
            m["view"] = p.view;
            out.push_back(std::move(m));
          },
          [&](const ev::Click& p) {
            if (p.operator_id != op) return;
            if (!p.accepted) {
              auto m = message("error", t);
              m["code"] = "click_rejected";
              m["message"] = p.reason;
              out.push_back(std::move(m));
            } else if (p.object_id) {
              // A hit consumes the object.
              auto m = message("object_expire", t);
              m["object_id"] = *p.object_id;
              m["view"] = p.view;
              out.push_back(std::move(m));
            }
          },
          [&](const ev::ScoreUpdate& p) {
            // Only the team score is shown to operators; the clicker also gets its delta.
            auto m = message("score_update", t);
            m["team_score"] = p.team_total;
            if (p.operator_id == op) m["delta"] = p.delta;
            out.push_back(std::move(m));
          },
          [&](const ev::IsaPrompt& p) {
            if (p.operator_id != op) return;
            auto m = message("isa_prompt", t);
            m["deadline"] = p.deadline_ms;
            out.push_back(std::move(m));
          },
          [&](const ev::ApprovalPrompt& p) {
            if (p.operator_id != op) return;
            auto m = message("approval_prompt", t);
            m["current"] = p.current;
            m["proposed"] = p.proposed;
            m["predicted_gain"] = p.predicted_gain;
            m["deadline"] = p.deadline_ms;
            out.push_back(std::move(m));
          },
          [&](const ev::SetEnd& p) {
            auto m = message("set_end", t);
            m["task_index"] = p.task_index;
            m["set"] = p.set;
            out.push_back(std::move(m));
          },
          [&](const ev::TaskEnd& p) {
            auto m = message("task_end", t);
            m["task_index"] = p.task_index;
            out.push_back(std::move(m));
          },
          [&](const ev::SessionEnd& p) {
            auto m = message("session_end", t);
            m["completed"] = p.completed;
            out.push_back(std::move(m));
          },
          [](const auto&) {},
      },
      e.payload);
  return out;
}

// ---- service internals ------------------------------------------------------------

class WsClient;

struct SessionEntry {
  std::unique_ptr<SessionEngine> engine;
  std::unique_ptr<EventLogWriter> log;
  std::chrono::steady_clock::time_point created;
  std::vector<std::weak_ptr<WsClient>> clients;
};

struct SessionService::Impl : std::enable_shared_from_this<SessionService::Impl> {
  explicit Impl(ServiceConfig c) : config(std::move(c)), acceptor(ioc), ticker(ioc), signals(ioc) {}

  ServiceConfig config;
  net::io_context ioc;
  tcp::acceptor acceptor;
  net::steady_timer ticker;
  net::signal_set signals;
  std::thread thread;
  std::atomic<unsigned short> bound_port{0};
  std::atomic<bool> is_running{false};
  std::mutex stop_mutex;
  std::condition_variable stopped_cv;
  bool stopped = false;
  bool stopping = false;

  std::map<std::string, SessionEntry> sessions;
  std::uint64_t created_count = 0;

  std::int64_t now_ms(const SessionEntry& s) const {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - s.created)
        .count();
  }

  void do_accept();
  void schedule_tick();
  void shutdown_all();

  http::response<http::string_body> handle(const http::request<http::string_body>& req);
  std::string create_session(const json& body);
  void attach(const std::string& id, const std::shared_ptr<WsClient>& client);
  void on_ws_message(const std::string& id, int op, const std::string& text, WsClient& client);
  void broadcast(SessionEntry& s, const SessionEvent& e);
  void maybe_autostart(SessionEntry& s);
};

class WsClient : public std::enable_shared_from_this<WsClient> {
 public:
  WsClient(tcp::socket socket, std::shared_ptr<SessionService::Impl> impl, std::string id, int op)
      : ws_(std::move(socket)), impl_(std::move(impl)), id_(std::move(id)), op_(op) {}

  void run(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->impl_->attach(self->id_, self);
      self->do_read();
    });
  }

  void send(const json& m) {
    if (closed_) return;
    queue_.push_back(m.dump());
    if (queue_.size() == 1) do_write();
  }

  void close() {
    if (closed_) return;
    closed_ = true;
    ws_.async_close(websocket::close_code::going_away, [self = shared_from_this()](beast::error_code) {});
  }

  int op() const noexcept { return op_; }

 private:
  void do_read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->closed_ = true;
        return;
      }
      const std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      self->impl_->on_ws_message(self->id_, self->op_, text, *self);
      self->do_read();
    });
  }

  void do_write() {
    ws_.text(true);
    ws_.async_write(net::buffer(queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->closed_ = true;
        self->queue_.clear();
        return;
      }
      self->queue_.pop_front();
      if (!self->queue_.empty()) self->do_write();
    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buffer_;
  std::deque<std::string> queue_;
  std::shared_ptr<SessionService::Impl> impl_;
  std::string id_;
  int op_;
  bool closed_ = false;
};

namespace {

http::response<http::string_body> json_response(http::status status, const json& body, unsigned version,
                                                bool keep_alive) {
  http::response<http::string_body> res{status, version};
  res.set(http::field::server, kServiceName);
  res.set(http::field::content_type, "application/json");
  res.set(http::field::access_control_allow_origin, "*");
  res.keep_alive(keep_alive);
  res.body() = body.dump();
  res.prepare_payload();
  return res;
}

std::vector<std::string> split_path(std::string_view path) {
  std::vector<std::string> parts;
  std::size_t i = 0;
  while (i < path.size()) {
    if (path[i] == '/') {
      ++i;
      continue;
    }
    const std::size_t j = path.find('/', i);
    parts.emplace_back(path.substr(i, j == std::string_view::npos ? std::string_view::npos : j - i));
    i = j == std::string_view::npos ? path.size() : j;
  }
  return parts;
}

std::map<std::string, std::string> parse_query(std::string_view query) {
  std::map<std::string, std::string> out;
  std::size_t i = 0;
  while (i <= query.size() && !query.empty()) {
    const std::size_t amp = query.find('&', i);
    const auto pair = query.substr(i, amp == std::string_view::npos ? std::string_view::npos : amp - i);
    const std::size_t eq = pair.find('=');
    if (eq == std::string_view::npos) {
      out[std::string(pair)] = "";
    } else {
      out[std::string(pair.substr(0, eq))] = std::string(pair.substr(eq + 1));
    }
    if (amp == std::string_view::npos) break;
    i = amp + 1;
  }
  return out;
}

class HttpConnection : public std::enable_shared_from_this<HttpConnection> {
 public:
  HttpConnection(tcp::socket socket, std::shared_ptr<SessionService::Impl> impl)
      : stream_(std::move(socket)), impl_(std::move(impl)) {}

  void run() { do_read(); }

 private:
  void do_read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      self->on_read(ec);
    });
  }

  void on_read(beast::error_code ec) {
    if (ec == http::error::end_of_stream) {
      stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
      return;
    }
    if (ec) return;
    if (websocket::is_upgrade(req_)) {
      upgrade();
      return;
    }
    auto res = std::make_shared<http::response<http::string_body>>(impl_->handle(req_));
    http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code wec, std::size_t) {
      if (wec) return;
      if (!res->keep_alive()) {
        beast::error_code ignored;
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
        return;
      }
      self->do_read();
    });
  }

  void upgrade() {
    const std::string_view target(req_.target().data(), req_.target().size());
    const auto qpos = target.find('?');
    const auto parts = split_path(target.substr(0, qpos));
    const auto query = parse_query(qpos == std::string_view::npos ? std::string_view{} : target.substr(qpos + 1));
    std::string error;
    int op = -1;
    if (parts.size() != 3 || parts[0] != "sessions" || parts[2] != "ws") {
      error = "websocket endpoint is /sessions/{id}/ws?operator=k";
    } else if (impl_->sessions.count(parts[1]) == 0) {
      error = "unknown session";
    } else {
      const auto it = query.find("operator");
      try {
        op = it == query.end() ? -1 : std::stoi(it->second);
      } catch (const std::exception&) {
        op = -1;
      }
      if (op < 0 || op >= impl_->sessions.at(parts[1]).engine->config().n_operators) {
        error = "operator query parameter missing or out of range";
      }
    }
    if (!error.empty()) {
      auto res = std::make_shared<http::response<http::string_body>>(
          json_response(http::status::bad_request, {{"error", error}}, req_.version(), false));
      http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code, std::size_t) {
        beast::error_code ignored;
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
      });
      return;
    }
    stream_.expires_never();
    std::make_shared<WsClient>(stream_.release_socket(), impl_, parts[1], op)->run(std::move(req_));
  }

  beast::tcp_stream stream_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
  std::shared_ptr<SessionService::Impl> impl_;
};

std::string session_id_for(std::uint64_t counter) {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%dT%H%M%SZ", &tm);
  return std::string(stamp) + "-" + std::to_string(counter);
}

}  // namespace

void SessionService::Impl::do_accept() {
  acceptor.async_accept([self = shared_from_this()](beast::error_code ec, tcp::socket socket) {
    if (ec) return;  // acceptor closed
    std::make_shared<HttpConnection>(std::move(socket), self)->run();
    self->do_accept();
  });
}

void SessionService::Impl::schedule_tick() {
  ticker.expires_after(std::chrono::milliseconds(config.tick_ms));
  ticker.async_wait([self = shared_from_this()](beast::error_code ec) {
    if (ec) return;
    for (auto& [id, s] : self->sessions) {
      if (s.engine->phase() == SessionPhase::kCreated || s.engine->phase() == SessionPhase::kEnded) continue;
      try {
        s.engine->advance_to(self->now_ms(s));
      } catch (const Error&) {
        s.engine->abort(self->now_ms(s));
      }
    }
    self->schedule_tick();
  });
}

void SessionService::Impl::shutdown_all() {
  if (stopping) return;
  stopping = true;
  beast::error_code ignored;
  acceptor.close(ignored);
  ticker.cancel();
  signals.cancel();
  for (auto& [id, s] : sessions) {
    s.engine->abort(now_ms(s));
    for (auto& weak : s.clients) {
      if (auto c = weak.lock()) c->close();
    }
  }
}

std::string SessionService::Impl::create_session(const json& body) {
  if (!body.is_object()) throw ConfigError("request body must be a JSON object");
  SessionConfig sc = config.session_defaults;
  std::uint64_t seed = config.seed + created_count;
  for (const auto& [key, value] : body.items()) {
    if (key == "config") {
      json merged = session_config_to_json(sc);
      if (!value.is_object()) throw ConfigError("config must be an object");
      merged.update(value);
      sc = session_config_from_json(merged);
    } else if (key == "seed") {
      seed = value.get<std::uint64_t>();
    } else {
      throw ConfigError("unknown key '" + key + "'");
    }
  }
  sc.validate();
  std::unique_ptr<WorkloadPredictor> predictor;
  if (!config.predictor_url.empty()) predictor = std::make_unique<HttpPredictor>(config.predictor_url);

  const std::string id = session_id_for(++created_count);
  SessionEntry entry;
  entry.engine = std::make_unique<SessionEngine>(id, sc, seed, std::move(predictor), config.policy, config.hpm);
  std::filesystem::create_directories(config.log_dir);
  entry.log = std::make_unique<EventLogWriter>(config.log_dir / (id + ".jsonl"));
  entry.created = std::chrono::steady_clock::now();
  auto [it, inserted] = sessions.emplace(id, std::move(entry));
  SessionEntry* s = &it->second;
  s->engine->add_listener([this, s](const SessionEvent& e) {
    s->log->write(e);
    broadcast(*s, e);
  });
  return id;
}

void SessionService::Impl::broadcast(SessionEntry& s, const SessionEvent& e) {
  const auto& views = s.engine->views();
  for (auto& weak : s.clients) {
    if (auto c = weak.lock()) {
      for (const auto& m : ws_messages_for(e, c->op(), views)) c->send(m);
    }
  }
}

void SessionService::Impl::maybe_autostart(SessionEntry& s) {
  if (s.engine->phase() != SessionPhase::kCreated) return;
  std::vector<bool> present(static_cast<std::size_t>(s.engine->config().n_operators), false);
  for (auto& weak : s.clients) {
    if (auto c = weak.lock()) present[static_cast<std::size_t>(c->op())] = true;
  }
  if (std::all_of(present.begin(), present.end(), [](bool b) { return b; })) s.engine->start(now_ms(s));
}

void SessionService::Impl::attach(const std::string& id, const std::shared_ptr<WsClient>& client) {
  const auto it = sessions.find(id);
  if (it == sessions.end()) {
    client->close();
    return;
  }
  SessionEntry& s = it->second;
  std::erase_if(s.clients, [](const auto& w) { return w.expired(); });
  s.clients.push_back(client);

  const SessionEngine& eng = *s.engine;
  const std::int64_t t = now_ms(s);
  auto hello = message("hello", t);
  hello["schema_version"] = kSessionSchemaVersion;
  hello["session"] = id;
  hello["operator"] = client->op();
  hello["n_operators"] = eng.config().n_operators;
  hello["total_views"] = eng.config().total_views;
  hello["phase"] = to_string(eng.phase());
  hello["team_score"] = eng.ledger().team_total;
  client->send(hello);

  // Catch up a (re)connecting operator on the current set and open prompts.
  if (eng.phase() == SessionPhase::kPlaying) {
    auto grid = message("view_grid", t);
    grid["views"] = eng.assigned_views(client->op());
    client->send(grid);
    for (const auto& obj : eng.live_objects()) {
      if (view_owner(eng.views(), obj.view) != client->op()) continue;
      auto m = message("object_spawn", t);
      m["object_id"] = obj.object_id;
      m["view"] = obj.view;
      m["kind"] = to_string(obj.kind);
      client->send(m);
    }
  }
  if (eng.isa_pending(client->op()) || eng.approval_pending(client->op())) {
    for (auto e = eng.events().rbegin(); e != eng.events().rend(); ++e) {
      const bool prompt = std::holds_alternative<ev::IsaPrompt>(e->payload) ||
                          std::holds_alternative<ev::ApprovalPrompt>(e->payload);
      if (!prompt) continue;
      const auto msgs = ws_messages_for(*e, client->op(), eng.views());
      if (!msgs.empty()) {
        client->send(msgs.front());
        break;
      }
    }
  }
  maybe_autostart(s);
}

void SessionService::Impl::on_ws_message(const std::string& id, int op, const std::string& text, WsClient& client) {
  const auto it = sessions.find(id);
  if (it == sessions.end()) return;
  SessionEntry& s = it->second;
  const std::int64_t t = now_ms(s);
  const auto reply_error = [&](std::string_view code, const std::string& what) {
    auto m = message("error", t);
    m["code"] = code;
    m["message"] = what;
    client.send(m);
  };
  try {
    const json m = json::parse(text);
    const auto type = m.at("type").get<std::string>();
    // Client timestamps are advisory; the server clock decides.
    if (type == "click") {
      std::optional<int> object_id;
      if (m.contains("object_id") && !m["object_id"].is_null()) object_id = m["object_id"].get<int>();
      s.engine->handle_click(op, m.at("view").get<int>(), t, object_id);
    } else if (type == "isa_response") {
      s.engine->submit_isa(op, IsaScore{m.at("score").get<int>()}, t);
    } else if (type == "approval_decision") {
      s.engine->submit_approval(op, m.at("accept").get<bool>(), t);
    } else {
      reply_error("unknown_type", "unknown message type '" + type + "'");
    }
  } catch (const json::exception& e) {
    reply_error("bad_message", e.what());
  } catch (const StateError& e) {
    reply_error("out_of_phase", e.what());
  } catch (const Error& e) {
    reply_error("invalid", e.what());
  }
}

http::response<http::string_body> SessionService::Impl::handle(const http::request<http::string_body>& req) {
  const unsigned version = req.version();
  const bool keep_alive = req.keep_alive();
  const auto reply = [&](http::status status, const json& body) {
    return json_response(status, body, version, keep_alive);
  };
  const std::string_view target(req.target().data(), req.target().size());
  const auto parts = split_path(target.substr(0, target.find('?')));
  const auto method = req.method();

  try {
    if (parts.size() == 1 && parts[0] == "health" && method == http::verb::get) {
      return reply(http::status::ok,
                   {{"service", kServiceName}, {"version", kVersion}, {"schema_version", kSessionSchemaVersion}});
    }
    if (parts.size() == 1 && parts[0] == "sessions") {
      if (method == http::verb::get) {
        json ids = json::array();
        for (const auto& [id, s] : sessions) ids.push_back(id);
        return reply(http::status::ok, {{"sessions", ids}});
      }
      if (method == http::verb::post) {
        const json body = req.body().empty() ? json::object() : json::parse(req.body());
        const std::string id = create_session(body);
        const auto& eng = *sessions.at(id).engine;
        json ws = json::array();
        for (int op = 0; op < eng.config().n_operators; ++op) {
          ws.push_back("/sessions/" + id + "/ws?operator=" + std::to_string(op));
        }
        return reply(http::status::created, {{"id", id},
                                             {"config", session_config_to_json(eng.config())},
                                             {"schema_version", kSessionSchemaVersion},
                                             {"ws", ws}});
      }
    }
    if (parts.size() == 3 && parts[0] == "sessions") {
      const auto it = sessions.find(parts[1]);
      if (it == sessions.end()) return reply(http::status::not_found, {{"error", "unknown session"}});
      SessionEntry& s = it->second;
      const std::string& action = parts[2];
      if (action == "state" && method == http::verb::get) {
        if (s.engine->phase() != SessionPhase::kCreated) s.engine->advance_to(now_ms(s));
        return reply(http::status::ok, s.engine->state_json());
      }
      if (action == "log" && method == http::verb::get) {
        std::string body;
        for (const auto& e : s.engine->events()) body += to_json(e).dump() + "\n";
        http::response<http::string_body> res{http::status::ok, version};
        res.set(http::field::server, kServiceName);
        res.set(http::field::content_type, "application/x-ndjson");
        res.set(http::field::access_control_allow_origin, "*");
        res.keep_alive(keep_alive);
        res.body() = std::move(body);
        res.prepare_payload();
        return res;
      }
      if (action == "start" && method == http::verb::post) {
        if (s.engine->phase() != SessionPhase::kCreated) throw StateError("session already started");
        s.engine->start(now_ms(s));
        return reply(http::status::ok, s.engine->state_json());
      }
      if (action == "survey" && method == http::verb::post) {
        const json body = json::parse(req.body());
        s.engine->submit_survey(body.at("operator").get<int>(),
                                parse_survey_kind(body.at("kind").get<std::string>()),
                                body.at("payload"), now_ms(s));
        return reply(http::status::ok, {{"stored", true}});
      }
    }
    return reply(http::status::not_found, {{"error", "no such route"}});
  } catch (const json::exception& e) {
    return reply(http::status::bad_request, {{"error", e.what()}});
  } catch (const StateError& e) {
    return reply(http::status::conflict, {{"error", e.what()}});
  } catch (const ConfigError& e) {
    return reply(http::status::bad_request, {{"error", e.what()}});
  } catch (const Error& e) {
    return reply(http::status::internal_server_error, {{"error", e.what()}});
  }
}

// ---- public API ----------------------------------------------------------------

SessionService::SessionService(ServiceConfig config) : impl_(std::make_shared<Impl>(std::move(config))) {
  impl_->config.session_defaults.validate();
  if (impl_->config.tick_ms < 1) throw ConfigError("serve: tick_ms must be >= 1");
}

SessionService::~SessionService() {
  stop();
}

void SessionService::start() {
  if (impl_->is_running) throw StateError("service already running");
  Impl& impl = *impl_;
  beast::error_code ec;
  const auto address = net::ip::make_address(impl.config.bind_address, ec);
  if (ec) throw ConfigError("bad bind address '" + impl.config.bind_address + "'");
  const tcp::endpoint endpoint(address, impl.config.port);
  impl.acceptor.open(endpoint.protocol(), ec);
  if (!ec) impl.acceptor.set_option(net::socket_base::reuse_address(true), ec);
  if (!ec) impl.acceptor.bind(endpoint, ec);
  if (!ec) impl.acceptor.listen(net::socket_base::max_listen_connections, ec);
  if (ec) {
    throw IoError("cannot bind " + impl.config.bind_address + ":" + std::to_string(impl.config.port) + ": " +
                  ec.message());
  }
  impl.bound_port = impl.acceptor.local_endpoint().port();
  if (impl.config.handle_signals) {
    impl.signals.add(SIGINT);
    impl.signals.add(SIGTERM);
    impl.signals.async_wait([self = impl_](beast::error_code sec, int) {
      if (!sec) self->shutdown_all();
    });
  }
  impl.do_accept();
  impl.schedule_tick();
  impl.is_running = true;
  impl.thread = std::thread([self = impl_] {
    self->ioc.run();
    self->is_running = false;
    std::lock_guard lock(self->stop_mutex);
    self->stopped = true;
    self->stopped_cv.notify_all();
  });
}

void SessionService::stop() {
  if (!impl_->thread.joinable()) return;
  net::post(impl_->ioc, [self = impl_] { self->shutdown_all(); });
  // Give in-flight writes and close frames a moment, then force the loop down.
  {
    std::unique_lock lock(impl_->stop_mutex);
    impl_->stopped_cv.wait_for(lock, std::chrono::seconds(2), [this] { return impl_->stopped; });
  }
  impl_->ioc.stop();
  impl_->thread.join();
  impl_->is_running = false;
}

void SessionService::wait() {
  if (!impl_->thread.joinable()) return;
  {
    std::unique_lock lock(impl_->stop_mutex);
    impl_->stopped_cv.wait(lock, [this] { return impl_->stopped; });
  }
  impl_->thread.join();
}

unsigned short SessionService::port() const noexcept {
  return impl_->bound_port;
}

bool SessionService::running() const noexcept {
  return impl_->is_running;
}

}  // namespace awac
