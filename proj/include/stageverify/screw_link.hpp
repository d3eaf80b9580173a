#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <stop_token>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "stageverify/core.hpp"

namespace sv {

enum class HoleState : std::uint8_t { Empty, InProcess, Assembled, Unknown };

std::string_view to_string(HoleState s);
/// Wire vocabulary: "empty", "in_process", "assembled".
std::string_view wire_name(HoleState s);
/// Throws ValidationError for anything outside the wire vocabulary.
HoleState parse_wire_state(std::string_view s);

struct HoleReport {
  std::string hole_id;
  HoleState state = HoleState::Empty;
  double conf = 0;
  TimeMs t_ms = 0;
  bool operator==(const HoleReport&) const = default;
};

namespace link {

inline constexpr int kProtocolVersion = 1;
inline constexpr std::size_t kMaxLineBytes = 64 * 1024;
inline constexpr TimeMs kHeartbeatPeriodMs = 1000;
inline constexpr TimeMs kPeerLostAfterMs = 3000;
inline constexpr int kDefaultPort = 7701;

struct Hello {
  std::string role;
  std::string session;
  int proto = kProtocolVersion;
  bool operator==(const Hello&) const = default;
};
struct Ack {
  std::string session;
  TimeMs tick_ms = 33;
  bool operator==(const Ack&) const = default;
};
struct Holes {
  TimeMs t_ms = 0;
  /// Each report's t_ms equals the message t_ms.
  std::vector<HoleReport> reports;
  bool operator==(const Holes&) const = default;
};
struct Heartbeat {
  TimeMs t_ms = 0;
  bool operator==(const Heartbeat&) const = default;
};
struct Bye {
  std::string reason;
  bool operator==(const Bye&) const = default;
};

using Message = std::variant<Hello, Ack, Holes, Heartbeat, Bye>;

enum class ErrorKind : std::uint8_t {
  MalformedJson,
  UnknownType,
  FieldRange,
  BadSequence,
  LineTooLong,
};

std::string_view to_string(ErrorKind k);

class ProtocolError : public std::runtime_error {
 public:
  ProtocolError(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

/// One minified JSON object, "type" first then alphabetical, plus '\n'.
std::string encode(const Message& m);
/// Accepts a line with or without its trailing newline. Throws ProtocolError.
Message decode(std::string_view line);

/// Splits a byte stream into newline-terminated lines.
class LineFramer {
 public:
  explicit LineFramer(std::size_t max_line = kMaxLineBytes) : max_(max_line) {}
  void feed(std::string_view bytes) { buf_.append(bytes); }
  /// Next complete line without its newline; throws LineTooLong.
  std::optional<std::string> next();
  std::size_t buffered() const { return buf_.size(); }

 private:
  std::string buf_;
  std::size_t max_;
};

}  // namespace link

/// Per-hole consolidation of recent reports.
struct HoleTrack {
  std::vector<HoleReport> recent;  // qualifying, within the TTL
  HoleState state = HoleState::Unknown;
  TimeMs last_update_ms = 0;
  int support_count = 0;
  bool operator==(const HoleTrack&) const = default;
};

struct HoleAggregate {
  std::map<std::string, HoleTrack> holes;

  HoleState state(const std::string& hole_id) const;
  std::map<std::string, HoleState> snapshot() const;
  bool operator==(const HoleAggregate&) const = default;
};

/// Confidence-weighted majority over qualifying reports (conf >= min_hole_conf)
/// no older than hole_ttl_ms. Ties resolve to the lower state
/// (Empty < InProcess < Assembled); holes with nothing qualifying are Unknown.
HoleAggregate aggregate_holes(HoleAggregate agg, TimeMs now_ms,
                              std::span<const HoleReport> reports,
                              const ThresholdConfig& cfg);

class Clock {
 public:
  virtual ~Clock() = default;
  virtual TimeMs now_ms() const = 0;
  /// Real time a transport should wait for `clock_ms` of this clock.
  virtual std::chrono::milliseconds wall(TimeMs clock_ms) const {
    return std::chrono::milliseconds(clock_ms);
  }
};

/// Milliseconds since construction, optionally sped up.
class SteadyClock final : public Clock {
 public:
  explicit SteadyClock(double speed = 1.0);
  TimeMs now_ms() const override;
  std::chrono::milliseconds wall(TimeMs clock_ms) const override;

 private:
  std::chrono::steady_clock::time_point start_;
  double speed_;
};

struct ReadResult {
  enum class Status { Data, Timeout, Closed } status = Status::Timeout;
  std::string bytes;
};

/// Reliable ordered byte stream.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual ReadResult read(std::chrono::milliseconds timeout) = 0;
  virtual bool write(std::string_view bytes) = 0;
  virtual void close() = 0;
};

struct LinkOutcome {
  enum class Kind { Clean, HeartbeatTimeout, Protocol, TransportClosed, Stopped };
  Kind kind = Kind::Clean;
  std::optional<link::ErrorKind> error;
  std::string detail;
  std::string session;
};

std::string_view to_string(LinkOutcome::Kind k);

struct LinkSessionOptions {
  TimeMs tick_ms = 33;
  TimeMs peer_lost_after_ms = link::kPeerLostAfterMs;
  TimeMs poll_ms = 50;
};

/// Main-unit side of one camera connection: Hello -> Ack handshake, then
/// validated Holes messages are forwarded to `sink`.
LinkOutcome link_session(Transport& transport,
                         const std::function<void(const link::Holes&)>& sink,
                         const Clock& clock, const LinkSessionOptions& opts = {},
                         std::stop_token stop = {});

struct CameraNodeOptions {
  std::string session = "screw-cam";
  TimeMs report_period_ms = 100;
  TimeMs heartbeat_ms = link::kHeartbeatPeriodMs;
  TimeMs ack_timeout_ms = link::kPeerLostAfterMs;
};

/// Camera-node side: greets, waits for Ack, then sends whatever `source`
/// produces every report period plus heartbeats. `source` returning nullopt
/// ends the session with Bye. Returns false if the handshake failed.
bool run_camera_node(Transport& transport, const Clock& clock,
                     const std::function<std::optional<link::Holes>(TimeMs)>& source,
                     const CameraNodeOptions& opts = {},
                     std::stop_token stop = {});

}  // namespace sv
