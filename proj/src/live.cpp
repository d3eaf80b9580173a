#include "stageverify/live.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <future>
#include <list>
#include <thread>
#include <variant>

#include <fmt/chrono.h>
#include <fmt/format.h>
#include <httplib.h>

#include "stageverify/canonical_json.hpp"

namespace sv {

using nlohmann::json;

std::string_view to_string(ControlCommand::Kind k) {
  switch (k) {
    case ControlCommand::Kind::Pause: return "Pause";
    case ControlCommand::Kind::Resume: return "Resume";
    case ControlCommand::Kind::AbortSession: return "AbortSession";
    case ControlCommand::Kind::AcknowledgeGuidance: return "AcknowledgeGuidance";
  }
  return "?";
}

ControlCommand control_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("control command must be a JSON object");
  auto c = j.find("command");
  if (c == j.end() || !c->is_string()) throw ValidationError("missing string 'command'");
  const auto name = c->get<std::string>();
  ControlCommand cmd;
  bool found = false;
  for (auto k : {ControlCommand::Kind::Pause, ControlCommand::Kind::Resume,
                 ControlCommand::Kind::AbortSession,
                 ControlCommand::Kind::AcknowledgeGuidance}) {
    if (to_string(k) == name) {
      cmd.kind = k;
      found = true;
    }
  }
  if (!found) throw ValidationError(fmt::format("unknown command '{}'", name));
  const bool ack = cmd.kind == ControlCommand::Kind::AcknowledgeGuidance;
  for (const auto& [key, _] : j.items())
    if (key != "command" && !(ack && key == "event_id"))
      throw ValidationError(fmt::format("unexpected field '{}'", key));
  if (ack) {
    auto e = j.find("event_id");
    const bool positive = e != j.end() && e->is_number_integer() &&
                          (e->is_number_unsigned() || e->get<std::int64_t>() > 0) &&
                          e->get<std::uint64_t>() > 0;
    if (!positive)
      throw ValidationError("'event_id' must be a positive integer");
    cmd.event_id = e->get<std::uint64_t>();
  }
  return cmd;
}

json to_json(const ControlCommand& c) {
  json j = {{"command", std::string(to_string(c.kind))}};
  if (c.kind == ControlCommand::Kind::AcknowledgeGuidance) j["event_id"] = c.event_id;
  return j;
}

// -- engine -----------------------------------------------------------------

LiveEngine::LiveEngine(AssemblyPlan plan, ThresholdConfig cfg,
                       std::shared_ptr<const WindowClassifier> classifier,
                       std::string session_id)
    : orch_(std::move(plan), cfg, classifier ? std::move(classifier) : default_classifier()),
      session_id_(std::move(session_id)) {}

void LiveEngine::begin(TimeMs now_ms) {
  now_ = now_ms;
  last_stream_t_ = now_ms;
  orch_.begin(now_ms);
}

void LiveEngine::stream_record(int source, const ReplayRecord& r, TimeMs arrival_ms) {
  if (ended()) return;
  if (const auto* meta = std::get_if<ReplayMeta>(&r)) {
    if (meta->plan_id != orch_.plan().plan_id)
      throw ValidationError(fmt::format("stream is for plan '{}', session runs '{}'",
                                        meta->plan_id, orch_.plan().plan_id));
    return;
  }
  const auto t = record_time(r);
  if (!t) return;
  auto [it, fresh] = offsets_.try_emplace(source, arrival_ms - *t);
  const TimeMs mapped = std::max(*t + it->second, last_stream_t_);
  last_stream_t_ = mapped;

  std::visit(
      [&](auto rec) {
        using T = std::decay_t<decltype(rec)>;
        if constexpr (std::is_same_v<T, DetectionFrame> || std::is_same_v<T, HandRecord> ||
                      std::is_same_v<T, ActionConfidence> || std::is_same_v<T, ObjAngle>) {
          rec.t_ms = mapped;
          orch_.ingest(rec);
        } else if constexpr (std::is_same_v<T, link::Holes>) {
          rec.t_ms = mapped;
          for (auto& h : rec.reports) h.t_ms = mapped;
          orch_.ingest(rec);
        }
      },
      r);
}

void LiveEngine::stream_closed(int source) { offsets_.erase(source); }

void LiveEngine::screw_holes(link::Holes h, TimeMs arrival_ms) {
  if (ended()) return;
  h.t_ms = arrival_ms;
  for (auto& r : h.reports) r.t_ms = arrival_ms;
  orch_.ingest(h);
}

ControlResult LiveEngine::control(const ControlCommand& c, TimeMs now_ms) {
  auto reject = [&](std::string why) {
    return ControlResult{409, json{{"error", std::move(why)},
                                   {"command", std::string(to_string(c.kind))}}};
  };
  if (ended()) return reject(fmt::format("session already {}", to_string(outcome_)));
  switch (c.kind) {
    case ControlCommand::Kind::Pause: orch_.set_paused(true); break;
    case ControlCommand::Kind::Resume: orch_.set_paused(false); break;
    case ControlCommand::Kind::AbortSession:
      outcome_ = Outcome::Aborted;
      ended_ms_ = std::max(now_ms, orch_.last_tick_ms());
      break;
    case ControlCommand::Kind::AcknowledgeGuidance: {
      const auto& log = orch_.log();
      auto it = std::find_if(log.begin(), log.end(), [&](const LoggedEvent& e) {
        return e.event_id == c.event_id;
      });
      if (it == log.end())
        return reject(fmt::format("no event with id {}", c.event_id));
      if (!std::holds_alternative<Guidance>(it->event))
        return reject(fmt::format("event {} is not guidance", c.event_id));
      const bool seen = std::any_of(acks_.begin(), acks_.end(), [&](const Acknowledgment& a) {
        return a.event_id == c.event_id;
      });
      if (!seen) acks_.push_back({c.event_id, now_ms});
      break;
    }
  }
  return {200, state_json()};
}

std::vector<LoggedEvent> LiveEngine::tick(TimeMs now_ms) {
  now_ = std::max(now_, now_ms);
  if (ended()) return {};
  auto events = orch_.tick(now_ms);
  if (orch_.finished()) {
    outcome_ = Outcome::Complete;
    ended_ms_ = orch_.last_tick_ms();
  }
  return events;
}

json LiveEngine::state_json() const {
  const auto& st = orch_.state();
  const auto& plan = orch_.plan();
  const auto& obs = orch_.last_observation();
  json holes = json::object();
  for (const auto& [id, _] : plan.holes) {
    auto it = obs.holes.find(id);
    holes[id] = std::string(to_string(it == obs.holes.end() ? HoleState::Unknown : it->second));
  }
  json guidance = nullptr;
  const auto& log = orch_.log();
  for (auto it = log.rbegin(); it != log.rend(); ++it) {
    if (std::holds_alternative<Guidance>(it->event)) {
      guidance = to_json(*it);
      break;
    }
  }
  json stage_id = nullptr;
  if (st.stage_ordinal >= 1 && st.stage_ordinal <= static_cast<int>(plan.size()))
    stage_id = plan.stage(st.stage_ordinal).id;
  return {{"session_id", session_id_},
          {"plan_id", plan.plan_id},
          {"t_ms", now_},
          {"stage_ordinal", st.stage_ordinal},
          {"stage_id", stage_id},
          {"stage_count", plan.size()},
          {"phase", std::string(to_string(st.phase))},
          {"holes", holes},
          {"last_guidance", guidance},
          {"last_event_id", log.empty() ? 0 : log.back().event_id},
          {"acknowledged", acks_.size()},
          {"paused", orch_.paused()},
          {"outcome", std::string(to_string(outcome_))}};
}

OperationReport LiveEngine::report() const {
  const TimeMs end = ended() ? ended_ms_ : std::max(now_, orch_.started_ms());
  return build_report(orch_.plan(), orch_.log(), session_id_, orch_.started_ms(), end,
                      outcome_, acks_);
}

// -- event hub ----------------------------------------------------------------

void EventHub::publish(const std::vector<LoggedEvent>& events) {
  if (events.empty()) return;
  {
    std::lock_guard lk(mu_);
    events_.insert(events_.end(), events.begin(), events.end());
  }
  cv_.notify_all();
}

std::vector<LoggedEvent> EventHub::wait_after(std::uint64_t after_id,
                                              std::chrono::milliseconds timeout) const {
  std::unique_lock lk(mu_);
  auto newer = [&] { return !events_.empty() && events_.back().event_id > after_id; };
  cv_.wait_for(lk, timeout, [&] { return newer() || closed_; });
  std::vector<LoggedEvent> out;
  // ids are 1-based and dense
  for (std::size_t i = static_cast<std::size_t>(after_id); i < events_.size(); ++i)
    out.push_back(events_[i]);
  return out;
}

std::vector<LoggedEvent> EventHub::all() const {
  std::lock_guard lk(mu_);
  return events_;
}

void EventHub::close() {
  {
    std::lock_guard lk(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

bool EventHub::closed() const {
  std::lock_guard lk(mu_);
  return closed_;
}

// -- live session -------------------------------------------------------------

namespace {

struct StreamMsg {
  int source;
  ReplayRecord record;
  TimeMs arrival;
};
struct StreamClosed {
  int source;
};
struct HolesMsg {
  link::Holes holes;
  TimeMs arrival;
};
struct ControlMsg {
  ControlCommand cmd;
  std::shared_ptr<std::promise<ControlResult>> reply;
};
using InboxMsg = std::variant<StreamMsg, StreamClosed, HolesMsg, ControlMsg>;

class Inbox {
 public:
  void push(InboxMsg m) {
    {
      std::lock_guard lk(mu_);
      q_.push_back(std::move(m));
    }
    cv_.notify_one();
  }
  std::deque<InboxMsg> drain(std::chrono::milliseconds wait) {
    std::unique_lock lk(mu_);
    cv_.wait_for(lk, wait, [&] { return !q_.empty() || woken_; });
    woken_ = false;
    std::deque<InboxMsg> out;
    out.swap(q_);
    return out;
  }
  void wake() {
    {
      std::lock_guard lk(mu_);
      woken_ = true;
    }
    cv_.notify_one();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<InboxMsg> q_;
  bool woken_ = false;
};

std::string live_session_id() {
  return fmt::format("live-{:%Y%m%dT%H%M%S}Z",
                     fmt::gmtime(std::chrono::system_clock::to_time_t(
                         std::chrono::system_clock::now())));
}

void write_file(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error(fmt::format("cannot write {}", tmp));
    out << bytes;
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error(fmt::format("cannot write {}", path));
}

}  // namespace

struct LiveSession::Impl {
  Impl(AssemblyPlan p, ThresholdConfig c, LiveOptions o,
       std::shared_ptr<const WindowClassifier> clf)
      : opts(std::move(o)),
        clock(opts.speed),
        engine(std::move(p), c, std::move(clf), live_session_id()) {}

  LiveOptions opts;
  SteadyClock clock;
  LiveEngine engine;  // owned by the loop thread once started
  Inbox inbox;
  EventHub hub;

  std::unique_ptr<TcpListener> screw_listener;
  std::unique_ptr<TcpListener> stream_listener;
  httplib::Server http;
  int http_port = 0;

  std::mutex snap_mu;
  json state_snapshot;
  std::optional<OperationReport> final_report;
  bool loop_done = false;
  std::condition_variable ended_cv;

  std::mutex conn_mu;
  std::list<std::shared_ptr<TcpTransport>> connections;
  std::list<std::jthread> workers;
  std::jthread loop_thread, screw_thread, stream_thread, http_thread;
  std::stop_source stopping;
  bool stopped = false;

  void log(const std::string& line) const {
    if (opts.log) opts.log(line);
  }

  void track(std::shared_ptr<TcpTransport> t) {
    std::lock_guard lk(conn_mu);
    connections.push_back(std::move(t));
  }

  void publish_snapshot() {
    std::lock_guard lk(snap_mu);
    state_snapshot = engine.state_json();
  }

  void finish() {
    const OperationReport report = engine.report();
    if (opts.report_path) {
      try {
        write_file(*opts.report_path, report_bytes(report));
      } catch (const std::exception& e) {
        log(e.what());
      }
    }
    {
      std::lock_guard lk(snap_mu);
      final_report = report;
    }
    ended_cv.notify_all();
    log(fmt::format("session {}: {} stages, {} errors", to_string(report.outcome),
                    report.stages_completed, report.error_count));
    if (opts.on_report) opts.on_report(report);
  }

  void run_loop(std::stop_token stop) {
    const TimeMs tick = engine.orchestrator().config().tick_ms;
    engine.begin(clock.now_ms());
    hub.publish(engine.orchestrator().log());
    hub.publish(engine.tick(clock.now_ms()));
    publish_snapshot();
    TimeMs next = clock.now_ms() + tick;
    bool reported = false;
    while (!stop.stop_requested()) {
      const TimeMs now = clock.now_ms();
      const auto wait = clock.wall(std::clamp<TimeMs>(next - now, 0, tick));
      for (auto& m : inbox.drain(wait)) {
        const TimeMs at = clock.now_ms();
        std::visit(
            [&](auto& msg) {
              using T = std::decay_t<decltype(msg)>;
              if constexpr (std::is_same_v<T, StreamMsg>) {
                try {
                  engine.stream_record(msg.source, msg.record, msg.arrival);
                } catch (const std::exception& e) {
                  log(fmt::format("stream {}: {}", msg.source, e.what()));
                }
              } else if constexpr (std::is_same_v<T, StreamClosed>) {
                engine.stream_closed(msg.source);
              } else if constexpr (std::is_same_v<T, HolesMsg>) {
                engine.screw_holes(std::move(msg.holes), msg.arrival);
              } else {
                msg.reply->set_value(engine.control(msg.cmd, at));
                publish_snapshot();
              }
            },
            m);
      }
      if (clock.now_ms() >= next) {
        const TimeMs at = clock.now_ms();
        hub.publish(engine.tick(at));
        publish_snapshot();
        next = std::max(next + tick, at - at % tick + tick);
      }
      if (engine.ended() && !reported) {
        reported = true;
        finish();
      }
    }
    if (!reported) {
      engine.control({ControlCommand::Kind::AbortSession, 0}, clock.now_ms());
      publish_snapshot();
      finish();
    }
    std::lock_guard lk(snap_mu);
    loop_done = true;
  }

  void accept_screw(std::stop_token stop) {
    LinkSessionOptions lopts;
    lopts.tick_ms = engine.orchestrator().config().tick_ms;
    while (!stop.stop_requested()) {
      auto conn = screw_listener->accept(std::chrono::milliseconds(100));
      if (!conn) continue;
      std::shared_ptr<TcpTransport> t(std::move(conn));
      track(t);
      std::lock_guard lk(conn_mu);
      workers.emplace_back([this, t, lopts](std::stop_token) {
        auto sink = [this](const link::Holes& h) {
          inbox.push(HolesMsg{h, clock.now_ms()});
        };
        const auto out = link_session(*t, sink, clock, lopts, stopping.get_token());
        log(fmt::format("screw link '{}' ended: {} {}", out.session, to_string(out.kind),
                        out.detail));
      });
    }
  }

  void accept_stream(std::stop_token stop) {
    int next_source = 0;
    while (!stop.stop_requested()) {
      auto conn = stream_listener->accept(std::chrono::milliseconds(100));
      if (!conn) continue;
      std::shared_ptr<TcpTransport> t(std::move(conn));
      track(t);
      const int source = next_source++;
      std::lock_guard lk(conn_mu);
      workers.emplace_back([this, t, source](std::stop_token) {
        read_stream(*t, source);
        inbox.push(StreamClosed{source});
      });
    }
  }

  void read_stream(TcpTransport& t, int source) {
    link::LineFramer framer;
    std::size_t lineno = 0;
    auto token = stopping.get_token();
    while (!token.stop_requested()) {
      auto rr = t.read(std::chrono::milliseconds(100));
      if (rr.status == ReadResult::Status::Closed) return;
      if (rr.status == ReadResult::Status::Timeout) continue;
      framer.feed(rr.bytes);
      try {
        while (auto line = framer.next()) {
          ++lineno;
          if (line->empty()) continue;
          inbox.push(StreamMsg{source, decode_record(*line, lineno), clock.now_ms()});
        }
      } catch (const std::exception& e) {
        log(fmt::format("stream {}: {}", source, e.what()));
        t.write(canonical_dump(json{{"error", e.what()}}) + "\n");
        t.close();
        return;
      }
    }
  }

  ControlResult submit(const ControlCommand& cmd) {
    {
      std::lock_guard lk(snap_mu);
      if (loop_done) return {409, json{{"error", "session stopped"}}};
    }
    auto reply = std::make_shared<std::promise<ControlResult>>();
    auto fut = reply->get_future();
    inbox.push(ControlMsg{cmd, reply});
    if (fut.wait_for(std::chrono::seconds(5)) != std::future_status::ready)
      return {409, json{{"error", "session not responding"}}};
    return fut.get();
  }

  void routes() {
    // no SO_REUSEPORT, so a second server on the same port fails to bind
    http.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
    });
    const auto json_reply = [](httplib::Response& res, int status, const json& body) {
      res.status = status;
      res.set_content(body.dump(), "application/json; charset=utf-8");
    };

    http.Get("/state", [this, json_reply](const httplib::Request&, httplib::Response& res) {
      std::lock_guard lk(snap_mu);
      json_reply(res, 200, state_snapshot);
    });

    http.Get("/report", [this, json_reply](const httplib::Request&, httplib::Response& res) {
      std::optional<OperationReport> done;
      {
        std::lock_guard lk(snap_mu);
        done = final_report;
      }
      if (done) return json_reply(res, 200, to_json(*done));
      // in progress: rebuild from the published log rather than touch the engine
      const auto& plan = engine.orchestrator().plan();
      const TimeMs started = engine.orchestrator().started_ms();
      const auto report = build_report(plan, hub.all(), engine.session_id(), started,
                                       std::max(started, clock.now_ms()),
                                       Outcome::InProgress);
      json_reply(res, 200, to_json(report));
    });

    http.Post("/control", [this, json_reply](const httplib::Request& req,
                                             httplib::Response& res) {
      ControlCommand cmd;
      try {
        cmd = control_from_json(json::parse(req.body));
      } catch (const std::exception& e) {
        return json_reply(res, 400, json{{"error", e.what()}});
      }
      const auto r = submit(cmd);
      json_reply(res, r.status, r.body);
    });

    http.Get("/events", [this](const httplib::Request& req, httplib::Response& res) {
      std::uint64_t after = 0;
      auto parse_id = [&](const std::string& s) {
        try {
          after = std::stoull(s);
        } catch (const std::exception&) {
          after = 0;
        }
      };
      if (req.has_header("Last-Event-ID")) parse_id(req.get_header_value("Last-Event-ID"));
      else if (req.has_param("last_event_id")) parse_id(req.get_param_value("last_event_id"));
      res.set_header("Cache-Control", "no-cache");
      res.set_chunked_content_provider(
          "text/event-stream", [this, after](std::size_t, httplib::DataSink& sink) mutable {
            auto batch = hub.wait_after(after, std::chrono::milliseconds(500));
            if (batch.empty()) {
              if (hub.closed()) {
                sink.done();
                return true;
              }
              static constexpr std::string_view ping = ": keepalive\n\n";
              return sink.write(ping.data(), ping.size());
            }
            for (const auto& e : batch) {
              const auto msg = fmt::format("id: {}\nevent: {}\ndata: {}\n\n", e.event_id,
                                           event_type(e.event), canonical_dump(to_json(e)));
              if (!sink.write(msg.data(), msg.size())) return false;
              after = e.event_id;
            }
            return true;
          });
    });
  }
};

LiveSession::LiveSession(AssemblyPlan plan, ThresholdConfig cfg, LiveOptions opts,
                         std::shared_ptr<const WindowClassifier> classifier)
    : impl_(std::make_unique<Impl>(std::move(plan), cfg, std::move(opts),
                                   std::move(classifier))) {}

LiveSession::~LiveSession() {
  if (impl_) stop();
}

void LiveSession::start() {
  auto& d = *impl_;
  d.screw_listener = std::make_unique<TcpListener>(d.opts.screw_host, d.opts.screw_port);
  d.stream_listener = std::make_unique<TcpListener>(d.opts.stream_host, d.opts.stream_port);
  d.routes();
  if (d.opts.http_port == 0) {
    d.http_port = d.http.bind_to_any_port(d.opts.http_host);
    if (d.http_port <= 0) throw BindError(fmt::format("cannot bind {}:0", d.opts.http_host));
  } else {
    if (!d.http.bind_to_port(d.opts.http_host, d.opts.http_port))
      throw BindError(
          fmt::format("cannot bind {}:{}", d.opts.http_host, d.opts.http_port));
    d.http_port = d.opts.http_port;
  }
  d.publish_snapshot();
  d.loop_thread = std::jthread([&d](std::stop_token s) { d.run_loop(s); });
  d.screw_thread = std::jthread([&d](std::stop_token s) { d.accept_screw(s); });
  d.stream_thread = std::jthread([&d](std::stop_token s) { d.accept_stream(s); });
  d.http_thread = std::jthread([&d](std::stop_token) { d.http.listen_after_bind(); });
  d.http.wait_until_ready();
}

std::uint16_t LiveSession::http_port() const {
  return static_cast<std::uint16_t>(impl_->http_port);
}
std::uint16_t LiveSession::screw_port() const { return impl_->screw_listener->port(); }
std::uint16_t LiveSession::stream_port() const { return impl_->stream_listener->port(); }
const Clock& LiveSession::clock() const { return impl_->clock; }
const EventHub& LiveSession::events() const { return impl_->hub; }

bool LiveSession::wait_ended(std::chrono::milliseconds timeout) {
  auto& d = *impl_;
  std::unique_lock lk(d.snap_mu);
  return d.ended_cv.wait_for(lk, timeout, [&] { return d.final_report.has_value(); });
}

OperationReport LiveSession::stop() {
  auto& d = *impl_;
  if (!d.stopped) {
    d.stopped = true;
    if (d.loop_thread.joinable()) {
      d.loop_thread.request_stop();
      d.inbox.wake();
      d.loop_thread.join();
    }
    d.stopping.request_stop();
    d.screw_thread = {};
    d.stream_thread = {};
    {
      std::lock_guard lk(d.conn_mu);
      for (auto& c : d.connections) c->close();
    }
    std::list<std::jthread> workers;
    {
      std::lock_guard lk(d.conn_mu);
      workers.swap(d.workers);
    }
    workers.clear();
    d.hub.close();
    d.http.stop();
    d.http_thread = {};
    if (d.screw_listener) d.screw_listener->close();
    if (d.stream_listener) d.stream_listener->close();
  }
  std::lock_guard lk(d.snap_mu);
  return d.final_report ? *d.final_report : d.engine.report();
}

OperationReport run_live(const AssemblyPlan& plan, const ThresholdConfig& cfg,
                         LiveOptions opts, std::stop_token stop,
                         std::shared_ptr<const WindowClassifier> classifier) {
  LiveSession session(plan, cfg, std::move(opts), std::move(classifier));
  session.start();
  while (!stop.stop_requested() && !session.wait_ended(std::chrono::milliseconds(100))) {
  }
  return session.stop();
}

// -- simulator node helpers ---------------------------------------------------

bool stream_records(Transport& transport, const std::vector<ReplayRecord>& records,
                    const Clock& clock, std::stop_token stop) {
  std::optional<TimeMs> first;
  const TimeMs zero = clock.now_ms();
  for (const auto& r : records) {
    if (std::holds_alternative<link::Holes>(r)) continue;
    if (auto t = record_time(r)) {
      if (!first) first = *t;
      const TimeMs due = zero + (*t - *first);
      for (;;) {
        if (stop.stop_requested()) return false;
        const TimeMs now = clock.now_ms();
        if (now >= due) break;
        std::this_thread::sleep_for(clock.wall(std::min<TimeMs>(due - now, 50)));
      }
    }
    if (!transport.write(encode_record(r) + "\n")) return false;
  }
  return true;
}

std::function<std::optional<link::Holes>(TimeMs)> replay_holes_source(
    const std::vector<ReplayRecord>& records) {
  auto holes = std::make_shared<std::vector<link::Holes>>();
  std::optional<TimeMs> first;
  TimeMs last = 0;
  for (const auto& r : records) {
    auto t = record_time(r);
    if (!t) continue;
    if (!first) first = *t;
    last = *t;
    if (const auto* h = std::get_if<link::Holes>(&r)) holes->push_back(*h);
  }
  const TimeMs origin = first.value_or(0);
  const TimeMs end = last - origin;
  auto start = std::make_shared<std::optional<TimeMs>>();
  return [holes, origin, end, start](TimeMs now) -> std::optional<link::Holes> {
    if (!*start) *start = now;
    const TimeMs rel = now - **start;
    if (rel > end) return std::nullopt;
    auto it = std::upper_bound(
        holes->begin(), holes->end(), rel + origin,
        [](TimeMs t, const link::Holes& h) { return t < h.t_ms; });
    link::Holes out;
    out.t_ms = now;
    if (it != holes->begin()) out.reports = std::prev(it)->reports;
    for (auto& r : out.reports) r.t_ms = now;
    return out;
  };
}

}  // namespace sv
