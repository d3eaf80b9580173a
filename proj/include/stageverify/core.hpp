#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace sv {

using TimeMs = std::int64_t;

/// Raised when a value read from a file, the wire or a caller violates a
/// field-range invariant. Values are never clamped.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidAngle : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class PartClass : std::uint8_t {
  HDDCase,
  ActuatorArm,
  Platter,
  Screw,
  ActuatorBase,
  ActuatorCover,
  CaseCover,
  Spindle,
  LogiBoard,
  ArmElectro,
};

inline constexpr std::array<PartClass, 10> kAllParts = {
    PartClass::HDDCase,      PartClass::ActuatorArm,   PartClass::Platter,
    PartClass::Screw,        PartClass::ActuatorBase,  PartClass::ActuatorCover,
    PartClass::CaseCover,    PartClass::Spindle,       PartClass::LogiBoard,
    PartClass::ArmElectro,
};

std::string_view to_string(PartClass p);
/// Throws ValidationError for anything outside the ten known identifiers.
PartClass parse_part(std::string_view s);

enum class Action : std::uint8_t { CatchBig, CatchSmall, Tightening, Done };

inline constexpr std::array<Action, 4> kAllActions = {
    Action::CatchBig, Action::CatchSmall, Action::Tightening, Action::Done};

std::string_view to_string(Action a);
Action parse_action(std::string_view s);

struct Detection {
  PartClass part = PartClass::HDDCase;
  double cx = 0, cy = 0, w = 0, h = 0;
  double conf = 0;
  std::optional<double> depth_mm;

  bool operator==(const Detection&) const = default;
};

struct DetectionFrame {
  TimeMs t_ms = 0;
  std::vector<Detection> detections;

  bool operator==(const DetectionFrame&) const = default;
};

struct ActionConfidence {
  double catch_big = 0, catch_small = 0, tightening = 0, done = 0;
  TimeMs t_ms = 0;

  double get(Action a) const;
  void set(Action a, double v);
  bool operator==(const ActionConfidence&) const = default;
};

struct ObjAngle {
  double degrees = 0;
  double conf = 0;
  TimeMs t_ms = 0;

  bool operator==(const ObjAngle&) const = default;
};

enum class RegionRule : std::uint8_t { CenterInside };

struct ThresholdConfig {
  double tau_det = 0.50;
  double tau_act = 0.80;
  double angle_tol_deg = 10.0;
  double depth_tol_mm = 15.0;
  RegionRule region_rule = RegionRule::CenterInside;
  int hold_ticks = 10;
  TimeMs det_ttl_ms = 100;
  TimeMs acf_ttl_ms = 200;
  TimeMs hole_ttl_ms = 500;
  TimeMs angle_ttl_ms = 100;
  TimeMs tick_ms = 33;
  TimeMs null_window_ms = 5000;
  TimeMs action_window_ms = 2000;
  TimeMs guidance_repeat_ms = 2000;
  double hand_box = 0.25;
  double min_hole_conf = 0.3;
  int depth_window = 5;
  double depth_alpha = 0.3;

  bool operator==(const ThresholdConfig&) const = default;
};

/// Throws ValidationError naming the first offending field.
void validate(const ThresholdConfig& cfg);
/// Reads a partial config; absent keys keep their defaults, unknown keys are
/// rejected.
ThresholdConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ThresholdConfig& cfg);

void validate(const Detection& d);
void validate(const ActionConfidence& a);
void validate(const ObjAngle& a);

/// raw mod 360 in [0, 360).
double canonicalize_angle(double raw);
/// Shortest angular distance in [0, 180].
double circ_diff(double a, double b);

struct Rect {
  double cx = 0, cy = 0, w = 0, h = 0;

  double left() const { return cx - w / 2; }
  double right() const { return cx + w / 2; }
  double top() const { return cy - h / 2; }
  double bottom() const { return cy + h / 2; }
  bool contains(double x, double y) const {
    return x >= left() && x <= right() && y >= top() && y <= bottom();
  }
  bool intersects(const Rect& o) const {
    return left() <= o.right() && o.left() <= right() && top() <= o.bottom() &&
           o.top() <= bottom();
  }
  bool operator==(const Rect&) const = default;
};

inline Rect box_of(const Detection& d) { return {d.cx, d.cy, d.w, d.h}; }

}  // namespace sv
