#include "stageverify/replay.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include <fmt/format.h>

#include "stageverify/canonical_json.hpp"

namespace sv {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 5> kReasonNames = {
    "NotJson", "UnknownType", "MissingMeta", "TimestampRegression", "FieldRange"};

void only_keys(const json& j, std::initializer_list<std::string_view> allowed) {
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) throw ValidationError(fmt::format("unexpected field '{}'", key));
  }
}

double finite(const json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_number()) throw ValidationError(fmt::format("'{}' must be a number", key));
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ValidationError(fmt::format("'{}' must be finite", key));
  return d;
}

TimeMs timestamp(const json& j) {
  const auto& v = j.at("t");
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
    throw ValidationError("'t' must be a nonnegative integer");
  return v.get<TimeMs>();
}

void validate_points(const std::vector<Vec3>& pts) {
  if (pts.empty()) throw ValidationError("hand record has no points");
  for (const auto& p : pts)
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
      throw ValidationError("hand point is not finite");
}

void validate_holes(const link::Holes& h) {
  for (const auto& r : h.reports) {
    if (r.hole_id.empty()) throw ValidationError("'hole' must be nonempty");
    if (r.state == HoleState::Unknown) throw ValidationError("hole state must be reported");
    if (!(r.conf >= 0.0 && r.conf <= 1.0)) throw ValidationError("'conf' outside [0,1]");
    if (r.t_ms != h.t_ms) throw ValidationError("report time differs from record time");
  }
}

void validate_record(const ReplayRecord& rec) {
  std::visit(
      [](const auto& r) {
        using T = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<T, ReplayMeta>) {
          if (r.schema != kReplaySchema)
            throw ValidationError(fmt::format("unsupported schema {}", r.schema));
          if (r.tick_ms <= 0) throw ValidationError("'tick_ms' must be positive");
        } else if constexpr (std::is_same_v<T, DetectionFrame>) {
          for (const auto& d : r.detections) validate(d);
        } else if constexpr (std::is_same_v<T, HandRecord>) {
          if (r.hand_index < 0) throw ValidationError("'hand_index' must be >= 0");
          validate_points(r.points);
        } else if constexpr (std::is_same_v<T, ObjAngle>) {
          validate(r);
        } else if constexpr (std::is_same_v<T, link::Holes>) {
          validate_holes(r);
        } else {
          validate(r);
        }
        if constexpr (!std::is_same_v<T, ReplayMeta>) {
          if (r.t_ms < 0) throw ValidationError("'t' must be nonnegative");
        }
      },
      rec);
}

Detection detection_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("detection must be an object");
  only_keys(j, {"part", "cx", "cy", "w", "h", "conf", "depth_mm"});
  Detection d;
  d.part = parse_part(j.at("part").get<std::string>());
  d.cx = finite(j, "cx");
  d.cy = finite(j, "cy");
  d.w = finite(j, "w");
  d.h = finite(j, "h");
  d.conf = finite(j, "conf");
  if (j.contains("depth_mm")) d.depth_mm = finite(j, "depth_mm");
  return d;
}

ReplayRecord record_from_json(const json& j, const std::string& type) {
  if (type == "meta") {
    only_keys(j, {"type", "schema", "plan_id", "tick_ms"});
    ReplayMeta m;
    m.schema = j.at("schema").get<int>();
    m.plan_id = j.at("plan_id").get<std::string>();
    const auto& tick = j.at("tick_ms");
    if (!tick.is_number_integer()) throw ValidationError("'tick_ms' must be an integer");
    m.tick_ms = tick.get<TimeMs>();
    return m;
  }
  if (type == "det") {
    only_keys(j, {"type", "t", "detections"});
    DetectionFrame f;
    f.t_ms = timestamp(j);
    const auto& ds = j.at("detections");
    if (!ds.is_array()) throw ValidationError("'detections' must be an array");
    for (const auto& d : ds) f.detections.push_back(detection_from_json(d));
    return f;
  }
  if (type == "hand") {
    only_keys(j, {"type", "t", "hand_index", "points"});
    HandRecord h;
    h.t_ms = timestamp(j);
    const auto& idx = j.at("hand_index");
    if (!idx.is_number_integer()) throw ValidationError("'hand_index' must be an integer");
    h.hand_index = idx.get<int>();
    const auto& pts = j.at("points");
    if (!pts.is_array()) throw ValidationError("'points' must be an array");
    for (const auto& p : pts) {
      if (!p.is_array() || p.size() != 3)
        throw ValidationError("each point must be [x, y, z]");
      for (const auto& c : p)
        if (!c.is_number()) throw ValidationError("point coordinates must be numbers");
      h.points.push_back({p[0].get<double>(), p[1].get<double>(), p[2].get<double>()});
    }
    return h;
  }
  if (type == "angle") {
    only_keys(j, {"type", "t", "degrees", "conf"});
    return ObjAngle{finite(j, "degrees"), finite(j, "conf"), timestamp(j)};
  }
  if (type == "holes") {
    only_keys(j, {"type", "t", "reports"});
    link::Holes h;
    h.t_ms = timestamp(j);
    const auto& reports = j.at("reports");
    if (!reports.is_array()) throw ValidationError("'reports' must be an array");
    for (const auto& r : reports) {
      if (!r.is_object()) throw ValidationError("report must be an object");
      only_keys(r, {"hole", "state", "conf"});
      HoleReport rep;
      rep.hole_id = r.at("hole").get<std::string>();
      rep.state = parse_wire_state(r.at("state").get<std::string>());
      rep.conf = finite(r, "conf");
      rep.t_ms = h.t_ms;
      h.reports.push_back(std::move(rep));
    }
    return h;
  }
  if (type == "acf") {
    only_keys(j, {"type", "t", "catch_big", "catch_small", "tightening", "done"});
    ActionConfidence a;
    a.t_ms = timestamp(j);
    a.catch_big = finite(j, "catch_big");
    a.catch_small = finite(j, "catch_small");
    a.tightening = finite(j, "tightening");
    a.done = finite(j, "done");
    return a;
  }
  throw std::logic_error("unreachable");
}

bool known_type(const std::string& t) {
  return t == "meta" || t == "det" || t == "hand" || t == "angle" || t == "holes" ||
         t == "acf";
}

json detection_json(const Detection& d) {
  json j = {{"part", std::string(to_string(d.part))},
            {"cx", d.cx},
            {"cy", d.cy},
            {"w", d.w},
            {"h", d.h},
            {"conf", d.conf}};
  if (d.depth_mm) j["depth_mm"] = *d.depth_mm;
  return j;
}

}  // namespace

std::string_view to_string(ReplayErrorReason r) {
  return kReasonNames.at(static_cast<std::size_t>(r));
}

ReplayFormatError::ReplayFormatError(std::size_t line, ReplayErrorReason reason,
                                     const std::string& detail)
    : ValidationError(fmt::format("line {}: {}: {}", line, to_string(reason), detail)),
      line_(line),
      reason_(reason) {}

std::string_view record_type(const ReplayRecord& r) {
  static constexpr std::array<std::string_view, 6> kNames = {"meta",  "det",   "hand",
                                                             "angle", "holes", "acf"};
  return kNames.at(r.index());
}

std::optional<TimeMs> record_time(const ReplayRecord& r) {
  return std::visit(
      [](const auto& v) -> std::optional<TimeMs> {
        if constexpr (std::is_same_v<std::decay_t<decltype(v)>, ReplayMeta>)
          return std::nullopt;
        else
          return v.t_ms;
      },
      r);
}

json to_json(const ReplayRecord& rec) {
  json j = std::visit(
      [](const auto& r) -> json {
        using T = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<T, ReplayMeta>) {
          return {{"schema", r.schema}, {"plan_id", r.plan_id}, {"tick_ms", r.tick_ms}};
        } else if constexpr (std::is_same_v<T, DetectionFrame>) {
          json ds = json::array();
          for (const auto& d : r.detections) ds.push_back(detection_json(d));
          return {{"t", r.t_ms}, {"detections", ds}};
        } else if constexpr (std::is_same_v<T, HandRecord>) {
          json pts = json::array();
          for (const auto& p : r.points) pts.push_back({p.x, p.y, p.z});
          return {{"t", r.t_ms}, {"hand_index", r.hand_index}, {"points", pts}};
        } else if constexpr (std::is_same_v<T, ObjAngle>) {
          return {{"t", r.t_ms}, {"degrees", r.degrees}, {"conf", r.conf}};
        } else if constexpr (std::is_same_v<T, link::Holes>) {
          json reports = json::array();
          for (const auto& h : r.reports)
            reports.push_back({{"hole", h.hole_id},
                               {"state", std::string(wire_name(h.state))},
                               {"conf", h.conf}});
          return {{"t", r.t_ms}, {"reports", reports}};
        } else {
          return {{"t", r.t_ms},
                  {"catch_big", r.catch_big},
                  {"catch_small", r.catch_small},
                  {"tightening", r.tightening},
                  {"done", r.done}};
        }
      },
      rec);
  j["type"] = std::string(record_type(rec));
  return j;
}

std::string encode_record(const ReplayRecord& r) { return canonical_dump(to_json(r)); }

ReplayRecord decode_record(std::string_view line, std::size_t lineno) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw ReplayFormatError(lineno, ReplayErrorReason::NotJson, "not a JSON object");
  auto t = j.find("type");
  if (t == j.end() || !t->is_string())
    throw ReplayFormatError(lineno, ReplayErrorReason::UnknownType, "missing 'type'");
  const auto type = t->get<std::string>();
  if (!known_type(type))
    throw ReplayFormatError(lineno, ReplayErrorReason::UnknownType,
                            fmt::format("unknown record type '{}'", type));
  try {
    ReplayRecord rec = record_from_json(j, type);
    validate_record(rec);
    return rec;
  } catch (const ValidationError& e) {
    throw ReplayFormatError(lineno, ReplayErrorReason::FieldRange, e.what());
  } catch (const json::exception& e) {
    throw ReplayFormatError(lineno, ReplayErrorReason::FieldRange, e.what());
  }
}

std::vector<ReplayRecord> read_replay(std::istream& in) {
  std::vector<ReplayRecord> out;
  std::string line;
  std::size_t lineno = 0;
  std::optional<TimeMs> last_t;
  while (std::getline(in, line)) {
    ++lineno;
    ReplayRecord rec = decode_record(line, lineno);
    const bool is_meta = std::holds_alternative<ReplayMeta>(rec);
    if (out.empty() && !is_meta)
      throw ReplayFormatError(lineno, ReplayErrorReason::MissingMeta,
                              "first record must be meta");
    if (!out.empty() && is_meta)
      throw ReplayFormatError(lineno, ReplayErrorReason::FieldRange,
                              "meta may only appear once, first");
    if (auto rt = record_time(rec)) {
      if (last_t && *rt < *last_t)
        throw ReplayFormatError(lineno, ReplayErrorReason::TimestampRegression,
                                fmt::format("t {} follows {}", *rt, *last_t));
      last_t = rt;
    }
    out.push_back(std::move(rec));
  }
  if (out.empty())
    throw ReplayFormatError(1, ReplayErrorReason::MissingMeta, "replay is empty");
  return out;
}

std::vector<ReplayRecord> read_replay(std::string_view text) {
  std::istringstream in{std::string(text)};
  return read_replay(in);
}

std::vector<ReplayRecord> read_replay_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(fmt::format("cannot open '{}'", path));
  return read_replay(in);
}

std::string write_replay(const std::vector<ReplayRecord>& records) {
  if (records.empty() || !std::holds_alternative<ReplayMeta>(records.front()))
    throw InvariantViolation(0, "first record must be meta");
  std::optional<TimeMs> last_t;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (i > 0 && std::holds_alternative<ReplayMeta>(records[i]))
      throw InvariantViolation(i, "meta may only appear first");
    try {
      validate_record(records[i]);
    } catch (const ValidationError& e) {
      throw InvariantViolation(i, e.what());
    }
    if (auto t = record_time(records[i])) {
      if (last_t && *t < *last_t)
        throw InvariantViolation(i, fmt::format("t {} follows {}", *t, *last_t));
      last_t = t;
    }
  }
  std::string out;
  for (const auto& r : records) {
    out += encode_record(r);
    out += '\n';
  }
  return out;
}

void write_replay(const std::vector<ReplayRecord>& records, std::ostream& out) {
  out << write_replay(records);
}

void write_replay_file(const std::vector<ReplayRecord>& records, const std::string& path) {
  const auto bytes = write_replay(records);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path));
  out << bytes;
  if (!out) throw std::runtime_error(fmt::format("write to '{}' failed", path));
}

}  // namespace sv
