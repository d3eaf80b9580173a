#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stop_token>
#include <string>
#include <vector>

#include <json.hpp>

#include "stageverify/net.hpp"
#include "stageverify/session.hpp"

namespace sv {

struct ControlCommand {
  enum class Kind : std::uint8_t { Pause, Resume, AbortSession, AcknowledgeGuidance };
  Kind kind = Kind::Pause;
  std::uint64_t event_id = 0;  // AcknowledgeGuidance only
  bool operator==(const ControlCommand&) const = default;
};

std::string_view to_string(ControlCommand::Kind k);
/// {"command": "Pause"} or {"command": "AcknowledgeGuidance", "event_id": 7}.
/// Throws ValidationError.
ControlCommand control_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ControlCommand& c);

struct ControlResult {
  int status = 200;  // 200 applied, 409 rejected
  nlohmann::json body;
};

/// Live counterpart of run_replay, driven by explicit arrival times so it can
/// run under a test clock. Not thread-safe: one owner feeds and ticks it.
class LiveEngine {
 public:
  LiveEngine(AssemblyPlan plan, ThresholdConfig cfg,
             std::shared_ptr<const WindowClassifier> classifier, std::string session_id);

  void begin(TimeMs now_ms);

  /// Stream record times are shifted onto the session clock by the offset
  /// seen at the source's first record. A meta record must name this plan
  /// (ValidationError otherwise).
  void stream_record(int source, const ReplayRecord& r, TimeMs arrival_ms);
  void stream_closed(int source);
  /// Screw-link reports are stamped with their arrival time.
  void screw_holes(link::Holes h, TimeMs arrival_ms);

  ControlResult control(const ControlCommand& c, TimeMs now_ms);
  std::vector<LoggedEvent> tick(TimeMs now_ms);

  bool ended() const { return outcome_ != Outcome::InProgress; }
  Outcome outcome() const { return outcome_; }
  TimeMs ended_ms() const { return ended_ms_; }
  const std::vector<Acknowledgment>& acknowledgments() const { return acks_; }
  const Orchestrator& orchestrator() const { return orch_; }
  const std::string& session_id() const { return session_id_; }

  nlohmann::json state_json() const;
  OperationReport report() const;

 private:
  Orchestrator orch_;
  std::string session_id_;
  std::map<int, TimeMs> offsets_;
  TimeMs last_stream_t_ = 0;
  TimeMs now_ = 0;
  Outcome outcome_ = Outcome::InProgress;
  TimeMs ended_ms_ = 0;
  std::vector<Acknowledgment> acks_;
};

/// Fan-out log of published events for SSE readers.
class EventHub {
 public:
  void publish(const std::vector<LoggedEvent>& events);
  /// Events with id > after_id; waits up to `timeout` when there are none.
  std::vector<LoggedEvent> wait_after(std::uint64_t after_id,
                                      std::chrono::milliseconds timeout) const;
  std::vector<LoggedEvent> all() const;
  void close();
  bool closed() const;

 private:
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::vector<LoggedEvent> events_;
  bool closed_ = false;
};

struct LiveOptions {
  std::string http_host = "0.0.0.0";
  std::uint16_t http_port = 7700;
  std::string screw_host = "0.0.0.0";
  std::uint16_t screw_port = link::kDefaultPort;
  std::string stream_host = "0.0.0.0";
  std::uint16_t stream_port = 7702;
  std::optional<std::string> report_path;
  /// Session clock rate; tests run faster than real time.
  double speed = 1.0;
  /// Called after the final report is written.
  std::function<void(const OperationReport&)> on_report;
  std::function<void(const std::string&)> log;
};

/// Screw-link listener, local stream listener, HTTP surface and the
/// orchestrator loop, each on its own thread.
class LiveSession {
 public:
  LiveSession(AssemblyPlan plan, ThresholdConfig cfg, LiveOptions opts,
              std::shared_ptr<const WindowClassifier> classifier = nullptr);
  ~LiveSession();
  LiveSession(const LiveSession&) = delete;
  LiveSession& operator=(const LiveSession&) = delete;

  /// Binds all three endpoints; throws BindError.
  void start();
  std::uint16_t http_port() const;
  std::uint16_t screw_port() const;
  std::uint16_t stream_port() const;
  const Clock& clock() const;
  const EventHub& events() const;

  bool wait_ended(std::chrono::milliseconds timeout);
  /// Aborts a session still in progress, then shuts everything down.
  OperationReport stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Runs until the session ends or `stop` is requested.
OperationReport run_live(const AssemblyPlan& plan, const ThresholdConfig& cfg,
                         LiveOptions opts, std::stop_token stop,
                         std::shared_ptr<const WindowClassifier> classifier = nullptr);

/// Simulator-node side of the local stream: sends `records` (meta first,
/// holes skipped) so that record time t leaves at clock time t - t_first.
bool stream_records(Transport& transport, const std::vector<ReplayRecord>& records,
                    const Clock& clock, std::stop_token stop = {});

/// Camera-node source that replays the holes records of a simulation on a
/// clock whose zero corresponds to the first record.
std::function<std::optional<link::Holes>(TimeMs)> replay_holes_source(
    const std::vector<ReplayRecord>& records);

}  // namespace sv
