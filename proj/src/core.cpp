#include "stageverify/core.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace sv {

namespace {

constexpr std::array<std::string_view, 10> kPartNames = {
    "HDDCase", "ActuatorArm",   "Platter",   "Screw",     "ActuatorBase",
    "ActuatorCover", "CaseCover", "Spindle", "LogiBoard", "ArmElectro",
};

constexpr std::array<std::string_view, 4> kActionNames = {
    "CatchBig", "CatchSmall", "Tightening", "Done"};

bool unit(double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; }

void require(bool ok, std::string_view what) {
  if (!ok) throw ValidationError(std::string(what));
}

}  // namespace

std::string_view to_string(PartClass p) {
  return kPartNames.at(static_cast<std::size_t>(p));
}

PartClass parse_part(std::string_view s) {
  for (std::size_t i = 0; i < kPartNames.size(); ++i)
    if (kPartNames[i] == s) return static_cast<PartClass>(i);
  throw ValidationError(fmt::format("unknown part class '{}'", s));
}

std::string_view to_string(Action a) {
  return kActionNames.at(static_cast<std::size_t>(a));
}

Action parse_action(std::string_view s) {
  for (std::size_t i = 0; i < kActionNames.size(); ++i)
    if (kActionNames[i] == s) return static_cast<Action>(i);
  throw ValidationError(fmt::format("unknown action '{}'", s));
}

double ActionConfidence::get(Action a) const {
  switch (a) {
    case Action::CatchBig: return catch_big;
    case Action::CatchSmall: return catch_small;
    case Action::Tightening: return tightening;
    case Action::Done: return done;
  }
  return 0.0;
}

void ActionConfidence::set(Action a, double v) {
  switch (a) {
    case Action::CatchBig: catch_big = v; break;
    case Action::CatchSmall: catch_small = v; break;
    case Action::Tightening: tightening = v; break;
    case Action::Done: done = v; break;
  }
}

double canonicalize_angle(double raw) {
  if (!std::isfinite(raw)) throw InvalidAngle("angle must be finite");
  double r = std::fmod(raw, 360.0);
  if (r < 0) r += 360.0;
  // fmod of a tiny negative value can round up to exactly 360
  if (r >= 360.0) r = 0.0;
  return r;
}

double circ_diff(double a, double b) {
  if (!std::isfinite(a) || !std::isfinite(b))
    throw InvalidAngle("angle must be finite");
  double d = std::fmod(std::fabs(a - b), 360.0);
  return std::min(d, 360.0 - d);
}

void validate(const Detection& d) {
  require(unit(d.cx) && unit(d.cy) && unit(d.w) && unit(d.h),
          "detection box outside [0,1]");
  require(unit(d.conf), "detection conf outside [0,1]");
  if (d.depth_mm)
    require(std::isfinite(*d.depth_mm) && *d.depth_mm > 0,
            "detection depth must be positive");
}

void validate(const ActionConfidence& a) {
  require(unit(a.catch_big) && unit(a.catch_small) && unit(a.tightening) &&
              unit(a.done),
          "action confidence outside [0,1]");
}

void validate(const ObjAngle& a) {
  require(std::isfinite(a.degrees) && a.degrees >= 0 && a.degrees < 360,
          "angle outside [0,360)");
  require(unit(a.conf), "angle conf outside [0,1]");
}

void validate(const ThresholdConfig& c) {
  require(c.tau_det > 0 && c.tau_det <= 1, "tau_det must be in (0,1]");
  require(c.tau_act > 0 && c.tau_act <= 1, "tau_act must be in (0,1]");
  require(c.angle_tol_deg > 0, "angle_tol_deg must be positive");
  require(c.depth_tol_mm > 0, "depth_tol_mm must be positive");
  require(c.hold_ticks >= 1, "hold_ticks must be >= 1");
  require(c.det_ttl_ms > 0 && c.acf_ttl_ms > 0 && c.hole_ttl_ms > 0 &&
              c.angle_ttl_ms > 0,
          "ttl values must be positive");
  require(c.tick_ms > 0, "tick_ms must be positive");
  require(c.null_window_ms > 0 && c.action_window_ms > 0 &&
              c.guidance_repeat_ms > 0,
          "windows must be positive");
  require(c.hand_box > 0 && c.hand_box <= 1, "hand_box must be in (0,1]");
  require(c.min_hole_conf >= 0 && c.min_hole_conf <= 1,
          "min_hole_conf must be in [0,1]");
  require(c.depth_window >= 1, "depth_window must be >= 1");
  require(c.depth_alpha > 0 && c.depth_alpha <= 1,
          "depth_alpha must be in (0,1]");
}

ThresholdConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  ThresholdConfig c;
  for (const auto& [key, v] : j.items()) {
    auto num = [&] {
      if (!v.is_number())
        throw ValidationError(fmt::format("config '{}' must be a number", key));
      return v.get<double>();
    };
    auto integer = [&] {
      if (!v.is_number_integer())
        throw ValidationError(
            fmt::format("config '{}' must be an integer", key));
      return v.get<std::int64_t>();
    };
    if (key == "tau_det") c.tau_det = num();
    else if (key == "tau_act") c.tau_act = num();
    else if (key == "angle_tol_deg") c.angle_tol_deg = num();
    else if (key == "depth_tol_mm") c.depth_tol_mm = num();
    else if (key == "region_rule") {
      if (v != "center_inside")
        throw ValidationError("region_rule must be 'center_inside'");
    } else if (key == "hold_ticks") c.hold_ticks = static_cast<int>(integer());
    else if (key == "det_ttl_ms") c.det_ttl_ms = integer();
    else if (key == "acf_ttl_ms") c.acf_ttl_ms = integer();
    else if (key == "hole_ttl_ms") c.hole_ttl_ms = integer();
    else if (key == "angle_ttl_ms") c.angle_ttl_ms = integer();
    else if (key == "tick_ms") c.tick_ms = integer();
    else if (key == "null_window_ms") c.null_window_ms = integer();
    else if (key == "action_window_ms") c.action_window_ms = integer();
    else if (key == "guidance_repeat_ms") c.guidance_repeat_ms = integer();
    else if (key == "hand_box") c.hand_box = num();
    else if (key == "min_hole_conf") c.min_hole_conf = num();
    else if (key == "depth_window") c.depth_window = static_cast<int>(integer());
    else if (key == "depth_alpha") c.depth_alpha = num();
    else if (key == "templates") {
      // consumed by the session layer
    } else {
      throw ValidationError(fmt::format("unknown config key '{}'", key));
    }
  }
  validate(c);
  return c;
}

nlohmann::json to_json(const ThresholdConfig& c) {
  return {
      {"tau_det", c.tau_det},
      {"tau_act", c.tau_act},
      {"angle_tol_deg", c.angle_tol_deg},
      {"depth_tol_mm", c.depth_tol_mm},
      {"region_rule", "center_inside"},
      {"hold_ticks", c.hold_ticks},
      {"det_ttl_ms", c.det_ttl_ms},
      {"acf_ttl_ms", c.acf_ttl_ms},
      {"hole_ttl_ms", c.hole_ttl_ms},
      {"angle_ttl_ms", c.angle_ttl_ms},
      {"tick_ms", c.tick_ms},
      {"null_window_ms", c.null_window_ms},
      {"action_window_ms", c.action_window_ms},
      {"guidance_repeat_ms", c.guidance_repeat_ms},
      {"hand_box", c.hand_box},
      {"min_hole_conf", c.min_hole_conf},
      {"depth_window", c.depth_window},
      {"depth_alpha", c.depth_alpha},
  };
}

}  // namespace sv
