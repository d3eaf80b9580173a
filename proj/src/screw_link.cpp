#include "stageverify/screw_link.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include <fmt/format.h>
#include <json.hpp>

#include "stageverify/canonical_json.hpp"

namespace sv {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 4> kStateNames = {"Empty", "InProcess",
                                                         "Assembled", "Unknown"};
constexpr std::array<std::string_view, 3> kWireStates = {"empty", "in_process",
                                                         "assembled"};

}  // namespace

std::string_view to_string(HoleState s) {
  return kStateNames.at(static_cast<std::size_t>(s));
}

std::string_view wire_name(HoleState s) {
  if (s == HoleState::Unknown)
    throw ValidationError("Unknown hole state is never sent on the wire");
  return kWireStates.at(static_cast<std::size_t>(s));
}

HoleState parse_wire_state(std::string_view s) {
  for (std::size_t i = 0; i < kWireStates.size(); ++i)
    if (kWireStates[i] == s) return static_cast<HoleState>(i);
  throw ValidationError(fmt::format("hole state '{}' not in wire vocabulary", s));
}

namespace link {

namespace {

constexpr std::array<std::string_view, 5> kErrorNames = {
    "MalformedJson", "UnknownType", "FieldRange", "BadSequence", "LineTooLong"};

[[noreturn]] void range_error(const std::string& what) {
  throw ProtocolError(ErrorKind::FieldRange, what);
}

const json& field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) range_error(fmt::format("missing field '{}'", key));
  return *it;
}

std::string string_field(const json& j, const char* key) {
  const auto& v = field(j, key);
  if (!v.is_string()) range_error(fmt::format("'{}' must be a string", key));
  return v.get<std::string>();
}

TimeMs time_field(const json& j, const char* key) {
  const auto& v = field(j, key);
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
    range_error(fmt::format("'{}' must be a nonnegative integer", key));
  return v.get<TimeMs>();
}

json report_json(const HoleReport& r) {
  return {{"hole", r.hole_id},
          {"state", std::string(wire_name(r.state))},
          {"conf", r.conf}};
}

}  // namespace

std::string_view to_string(ErrorKind k) {
  return kErrorNames.at(static_cast<std::size_t>(k));
}

std::string encode(const Message& m) {
  json j = std::visit(
      [](const auto& msg) -> json {
        using T = std::decay_t<decltype(msg)>;
        if constexpr (std::is_same_v<T, Hello>) {
          return {{"type", "hello"},
                  {"role", msg.role},
                  {"session", msg.session},
                  {"proto", msg.proto}};
        } else if constexpr (std::is_same_v<T, Ack>) {
          return {{"type", "ack"}, {"session", msg.session}, {"tick_ms", msg.tick_ms}};
        } else if constexpr (std::is_same_v<T, Holes>) {
          json reports = json::array();
          for (const auto& r : msg.reports) reports.push_back(report_json(r));
          return {{"type", "holes"}, {"t", msg.t_ms}, {"reports", reports}};
        } else if constexpr (std::is_same_v<T, Heartbeat>) {
          return {{"type", "hb"}, {"t", msg.t_ms}};
        } else {
          return {{"type", "bye"}, {"reason", msg.reason}};
        }
      },
      m);
  return canonical_dump(j) + "\n";
}

Message decode(std::string_view line) {
  if (!line.empty() && line.back() == '\n') line.remove_suffix(1);
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw ProtocolError(ErrorKind::MalformedJson, "line is not a JSON object");
  auto t = j.find("type");
  if (t == j.end() || !t->is_string())
    throw ProtocolError(ErrorKind::MalformedJson, "missing string 'type'");
  const auto type = t->get<std::string>();

  if (type == "hello") {
    Hello h;
    h.role = string_field(j, "role");
    h.session = string_field(j, "session");
    const auto& p = field(j, "proto");
    if (!p.is_number_integer() || p.get<int>() != kProtocolVersion)
      range_error(fmt::format("unsupported proto {}", p.dump()));
    h.proto = p.get<int>();
    return h;
  }
  if (type == "ack") {
    Ack a;
    a.session = string_field(j, "session");
    a.tick_ms = time_field(j, "tick_ms");
    if (a.tick_ms <= 0) range_error("'tick_ms' must be positive");
    return a;
  }
  if (type == "holes") {
    Holes h;
    h.t_ms = time_field(j, "t");
    const auto& reports = field(j, "reports");
    if (!reports.is_array()) range_error("'reports' must be an array");
    for (const auto& r : reports) {
      if (!r.is_object()) range_error("report must be an object");
      HoleReport rep;
      rep.hole_id = string_field(r, "hole");
      if (rep.hole_id.empty()) range_error("'hole' must be nonempty");
      try {
        rep.state = parse_wire_state(string_field(r, "state"));
      } catch (const ValidationError& e) {
        range_error(e.what());
      }
      const auto& c = field(r, "conf");
      if (!c.is_number()) range_error("'conf' must be a number");
      rep.conf = c.get<double>();
      if (!(rep.conf >= 0.0 && rep.conf <= 1.0)) range_error("'conf' outside [0,1]");
      rep.t_ms = h.t_ms;
      h.reports.push_back(std::move(rep));
    }
    return h;
  }
  if (type == "hb") return Heartbeat{time_field(j, "t")};
  if (type == "bye") return Bye{string_field(j, "reason")};
  throw ProtocolError(ErrorKind::UnknownType,
                      fmt::format("unknown message type '{}'", type));
}

std::optional<std::string> LineFramer::next() {
  const auto nl = buf_.find('\n');
  if (nl == std::string::npos) {
    if (buf_.size() > max_)
      throw ProtocolError(ErrorKind::LineTooLong,
                          fmt::format("line exceeds {} bytes", max_));
    return std::nullopt;
  }
  if (nl > max_)
    throw ProtocolError(ErrorKind::LineTooLong,
                        fmt::format("line exceeds {} bytes", max_));
  std::string line = buf_.substr(0, nl);
  buf_.erase(0, nl + 1);
  return line;
}

}  // namespace link

HoleState HoleAggregate::state(const std::string& hole_id) const {
  auto it = holes.find(hole_id);
  return it == holes.end() ? HoleState::Unknown : it->second.state;
}

std::map<std::string, HoleState> HoleAggregate::snapshot() const {
  std::map<std::string, HoleState> out;
  for (const auto& [id, track] : holes) out.emplace(id, track.state);
  return out;
}

HoleAggregate aggregate_holes(HoleAggregate agg, TimeMs now_ms,
                              std::span<const HoleReport> reports,
                              const ThresholdConfig& cfg) {
  for (const auto& r : reports) {
    auto& track = agg.holes[r.hole_id];
    if (r.conf >= cfg.min_hole_conf && r.state != HoleState::Unknown)
      track.recent.push_back(r);
  }
  for (auto& [id, track] : agg.holes) {
    std::erase_if(track.recent, [&](const HoleReport& r) {
      return now_ms - r.t_ms > cfg.hole_ttl_ms;
    });
    if (track.recent.empty()) {
      track.state = HoleState::Unknown;
      track.support_count = 0;
      continue;
    }
    std::array<double, 3> weight{};
    std::array<int, 3> count{};
    TimeMs newest = track.recent.front().t_ms;
    for (const auto& r : track.recent) {
      weight[static_cast<std::size_t>(r.state)] += r.conf;
      ++count[static_cast<std::size_t>(r.state)];
      newest = std::max(newest, r.t_ms);
    }
    // strict comparison keeps the lower state on ties
    std::size_t best = 0;
    for (std::size_t s = 1; s < weight.size(); ++s)
      if (weight[s] > weight[best]) best = s;
    track.state = static_cast<HoleState>(best);
    track.support_count = count[best];
    track.last_update_ms = newest;
  }
  return agg;
}

SteadyClock::SteadyClock(double speed)
    : start_(std::chrono::steady_clock::now()), speed_(speed) {}

TimeMs SteadyClock::now_ms() const {
  const auto elapsed = std::chrono::steady_clock::now() - start_;
  const double ms =
      std::chrono::duration<double, std::milli>(elapsed).count() * speed_;
  return static_cast<TimeMs>(ms);
}

std::chrono::milliseconds SteadyClock::wall(TimeMs clock_ms) const {
  return std::chrono::milliseconds(
      std::max<TimeMs>(1, static_cast<TimeMs>(clock_ms / speed_)));
}

std::string_view to_string(LinkOutcome::Kind k) {
  switch (k) {
    case LinkOutcome::Kind::Clean: return "Clean";
    case LinkOutcome::Kind::HeartbeatTimeout: return "HeartbeatTimeout";
    case LinkOutcome::Kind::Protocol: return "Protocol";
    case LinkOutcome::Kind::TransportClosed: return "TransportClosed";
    case LinkOutcome::Kind::Stopped: return "Stopped";
  }
  return "?";
}

LinkOutcome link_session(Transport& transport,
                         const std::function<void(const link::Holes&)>& sink,
                         const Clock& clock, const LinkSessionOptions& opts,
                         std::stop_token stop) {
  using namespace link;
  LineFramer framer;
  bool established = false;
  TimeMs last_msg = clock.now_ms();
  LinkOutcome out;

  auto fail = [&](const ProtocolError& e) {
    out.kind = LinkOutcome::Kind::Protocol;
    out.error = e.kind();
    out.detail = e.what();
    transport.write(encode(Bye{fmt::format("protocol error: {}", e.what())}));
    transport.close();
    return out;
  };

  for (;;) {
    if (stop.stop_requested()) {
      transport.write(encode(Bye{"server shutdown"}));
      transport.close();
      out.kind = LinkOutcome::Kind::Stopped;
      return out;
    }
    const TimeMs now = clock.now_ms();
    const TimeMs deadline = last_msg + opts.peer_lost_after_ms;
    if (now >= deadline) {
      out.kind = LinkOutcome::Kind::HeartbeatTimeout;
      out.detail = fmt::format("no message for {} ms", now - last_msg);
      transport.close();
      return out;
    }
    const auto wait = clock.wall(std::clamp<TimeMs>(deadline - now, 1, opts.poll_ms));
    auto rr = transport.read(wait);
    if (rr.status == ReadResult::Status::Closed) {
      out.kind = LinkOutcome::Kind::TransportClosed;
      out.detail = "peer closed the connection";
      return out;
    }
    if (rr.status == ReadResult::Status::Timeout) continue;

    framer.feed(rr.bytes);
    try {
      while (auto line = framer.next()) {
        Message msg = decode(*line);
        last_msg = clock.now_ms();
        if (auto* hello = std::get_if<Hello>(&msg)) {
          if (established)
            throw ProtocolError(ErrorKind::BadSequence, "duplicate hello");
          established = true;
          out.session = hello->session;
          transport.write(encode(Ack{hello->session, opts.tick_ms}));
        } else if (!established) {
          throw ProtocolError(ErrorKind::BadSequence,
                              "first message must be hello");
        } else if (auto* holes = std::get_if<Holes>(&msg)) {
          sink(*holes);
        } else if (std::holds_alternative<Bye>(msg)) {
          out.kind = LinkOutcome::Kind::Clean;
          out.detail = std::get<Bye>(msg).reason;
          transport.close();
          return out;
        } else if (std::holds_alternative<Ack>(msg)) {
          throw ProtocolError(ErrorKind::BadSequence,
                              "ack is only sent by the main unit");
        }
        // heartbeats only refresh last_msg
      }
    } catch (const ProtocolError& e) {
      return fail(e);
    }
  }
}

bool run_camera_node(Transport& transport, const Clock& clock,
                     const std::function<std::optional<link::Holes>(TimeMs)>& source,
                     const CameraNodeOptions& opts, std::stop_token stop) {
  using namespace link;
  if (!transport.write(encode(Hello{"screw_camera", opts.session, kProtocolVersion})))
    return false;

  LineFramer framer;
  const TimeMs ack_deadline = clock.now_ms() + opts.ack_timeout_ms;
  bool acked = false;
  while (!acked) {
    const TimeMs now = clock.now_ms();
    if (now >= ack_deadline || stop.stop_requested()) return false;
    auto rr = transport.read(clock.wall(std::clamp<TimeMs>(ack_deadline - now, 1, 50)));
    if (rr.status == ReadResult::Status::Closed) return false;
    framer.feed(rr.bytes);
    try {
      while (auto line = framer.next()) {
        auto msg = decode(*line);
        if (std::holds_alternative<Ack>(msg)) acked = true;
        else return false;
      }
    } catch (const ProtocolError&) {
      return false;
    }
  }

  TimeMs next_report = clock.now_ms();
  TimeMs next_hb = next_report + opts.heartbeat_ms;
  for (;;) {
    if (stop.stop_requested()) {
      transport.write(encode(Bye{"node stopped"}));
      transport.close();
      return true;
    }
    const TimeMs now = clock.now_ms();
    if (now >= next_report) {
      auto holes = source(now);
      if (!holes) {
        transport.write(encode(Bye{"done"}));
        transport.close();
        return true;
      }
      if (!transport.write(encode(*holes))) return true;
      next_report += opts.report_period_ms;
      if (next_report <= now) next_report = now + opts.report_period_ms;
    }
    if (now >= next_hb) {
      if (!transport.write(encode(Heartbeat{now}))) return true;
      next_hb = now + opts.heartbeat_ms;
    }
    const TimeMs wake = std::min(next_report, next_hb);
    auto rr = transport.read(clock.wall(std::clamp<TimeMs>(wake - clock.now_ms(), 1, 50)));
    if (rr.status == ReadResult::Status::Closed) return true;
    // the main unit only ever sends Bye after the handshake
    if (rr.status == ReadResult::Status::Data &&
        rr.bytes.find("\"bye\"") != std::string::npos) {
      transport.close();
      return true;
    }
  }
}

}  // namespace sv
