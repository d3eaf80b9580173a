#include "stageverify/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>

#include <fmt/format.h>

#include "stageverify/angle.hpp"
#include "stageverify/gesture.hpp"

namespace sv {

std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::Happy: return "happy";
    case Scenario::CheatScrew: return "cheat-screw";
    case Scenario::WrongPart: return "wrong-part";
    case Scenario::SkipAttempt: return "skip-attempt";
  }
  return "?";
}

Scenario parse_scenario(std::string_view s) {
  for (auto sc : {Scenario::Happy, Scenario::CheatScrew, Scenario::WrongPart,
                  Scenario::SkipAttempt})
    if (to_string(sc) == s) return sc;
  throw ValidationError(fmt::format("unknown scenario '{}'", s));
}

namespace {

constexpr double kTrayDepth = 700.0;
constexpr double kCaseDepth = 660.0;
constexpr double kLift = 60.0;
constexpr double kHandScale = 0.12;
constexpr double kArmTrayRotation = 35.0;
// Time into a real tightening when the screw seats.
constexpr TimeMs kSeatAfterMs = 1600;

struct Size {
  double w, h;
};

Size part_size(PartClass p) {
  switch (p) {
    case PartClass::HDDCase: return {0.50, 0.50};
    case PartClass::ActuatorBase: return {0.10, 0.08};
    case PartClass::ActuatorArm: return {0.12, 0.05};
    case PartClass::ArmElectro: return {0.05, 0.05};
    case PartClass::ActuatorCover: return {0.09, 0.07};
    case PartClass::Platter: return {0.12, 0.12};
    case PartClass::Spindle: return {0.06, 0.06};
    case PartClass::CaseCover: return {0.12, 0.10};
    case PartClass::LogiBoard: return {0.12, 0.08};
    case PartClass::Screw: return {0.06, 0.04};
  }
  return {0.1, 0.1};
}

struct Key {
  TimeMs t;
  double x, y, depth;
};

struct HandSeg {
  TimeMs start, end;
  Action pose;
  double x0, y0, x1, y1;
  double phase0;
};

struct HoleEvent {
  TimeMs t;
  std::string hole;
  HoleState state;
};

double lerp(double a, double b, double u) { return a + (b - a) * u; }

/// The operator's scripted actions, laid out on a timeline.
class Script {
 public:
  explicit Script(std::mt19937_64& rng) : rng_(rng) {}

  TimeMs now() const { return now_; }

  TimeMs span(double seconds) {
    std::uniform_real_distribution<double> jitter(0.95, 1.05);
    return static_cast<TimeMs>(std::lround(seconds * 1000.0 * jitter(rng_)));
  }

  void place(PartClass p, double x, double y, double depth) {
    parts_[p].push_back({now_, x, y, depth});
  }

  Key where(PartClass p) const { return parts_.at(p).back(); }

  void idle(double seconds) { now_ += span(seconds); }

  void grasp(PartClass p, Action a, double seconds) {
    const Key k = where(p);
    hand(a, k.x, k.y, k.x, k.y, span(seconds));
  }

  void carry(PartClass p, Action a, double x, double y, double depth, double seconds,
             std::optional<double> rotate_to = std::nullopt) {
    const Key from = where(p);
    const TimeMs d = span(seconds);
    parts_[p].push_back({now_, from.x, from.y, from.depth});
    parts_[p].push_back({now_ + d / 2, (from.x + x) / 2, (from.y + y) / 2,
                         std::min(from.depth, depth) - kLift});
    parts_[p].push_back({now_ + d, x, y, depth});
    if (rotate_to) {
      arm_rot_.push_back({now_, current_rotation()});
      arm_rot_.push_back({now_ + d, *rotate_to});
    }
    hand(a, from.x, from.y, x, y, d);
  }

  void hold(PartClass p, Action a, double seconds) { grasp(p, a, seconds); }

  void gesture(Action a, double x0, double y0, double x1, double y1, double seconds) {
    hand(a, x0, y0, x1, y1, span(seconds));
  }

  /// Tightening at (x, y); a real one seats the screw partway through.
  TimeMs tighten(const std::string& hole, double x, double y, double seconds, bool real) {
    const TimeMs start = now_;
    hand(Action::Tightening, x, y, x, y, span(seconds));
    if (!real) return -1;
    holes_.push_back({start, hole, HoleState::InProcess});
    holes_.push_back({start + kSeatAfterMs, hole, HoleState::Assembled});
    return start + kSeatAfterMs;
  }

  double current_rotation() const {
    return arm_rot_.empty() ? kArmTrayRotation : arm_rot_.back().second;
  }

  // -- evaluation ----------------------------------------------------------

  std::optional<Key> part_at(PartClass p, TimeMs t) const {
    auto it = parts_.find(p);
    if (it == parts_.end()) return std::nullopt;
    const auto& keys = it->second;
    if (t <= keys.front().t) return keys.front();
    for (std::size_t i = 1; i < keys.size(); ++i) {
      if (t < keys[i].t) {
        const auto& a = keys[i - 1];
        const auto& b = keys[i];
        const double u = static_cast<double>(t - a.t) / static_cast<double>(b.t - a.t);
        return Key{t, lerp(a.x, b.x, u), lerp(a.y, b.y, u), lerp(a.depth, b.depth, u)};
      }
    }
    return keys.back();
  }

  const HandSeg* hand_at(TimeMs t) const {
    for (const auto& h : hands_)
      if (t >= h.start && t < h.end) return &h;
    return nullptr;
  }

  double rotation_at(TimeMs t) const {
    if (arm_rot_.empty() || t <= arm_rot_.front().first)
      return arm_rot_.empty() ? kArmTrayRotation : arm_rot_.front().second;
    for (std::size_t i = 1; i < arm_rot_.size(); ++i) {
      if (t < arm_rot_[i].first) {
        const auto& [ta, ra] = arm_rot_[i - 1];
        const auto& [tb, rb] = arm_rot_[i];
        return lerp(ra, rb, static_cast<double>(t - ta) / static_cast<double>(tb - ta));
      }
    }
    return arm_rot_.back().second;
  }

  HoleState hole_at(const std::string& hole, TimeMs t) const {
    HoleState s = HoleState::Empty;
    for (const auto& e : holes_)
      if (e.hole == hole && e.t <= t) s = e.state;
    return s;
  }

  const std::map<PartClass, std::vector<Key>>& parts() const { return parts_; }

 private:
  void hand(Action a, double x0, double y0, double x1, double y1, TimeMs d) {
    std::uniform_real_distribution<double> phase(0.0, 1.0);
    hands_.push_back({now_, now_ + d, a, x0, y0, x1, y1, phase(rng_)});
    now_ += d;
  }

  std::mt19937_64& rng_;
  TimeMs now_ = 0;
  std::map<PartClass, std::vector<Key>> parts_;
  std::vector<HandSeg> hands_;
  std::vector<HoleEvent> holes_;
  std::vector<std::pair<TimeMs, double>> arm_rot_;
};

struct Slot {
  double x, y;
};

std::vector<Slot> tray_slots(std::size_t n) {
  std::vector<Slot> out;
  constexpr std::array<double, 4> rows = {0.15, 0.40, 0.65, 0.90};
  for (std::size_t i = 0; out.size() < n; ++i) {
    const std::size_t col = i / 4;
    const double inset = 0.12 * static_cast<double>(col / 2);
    const double x = col % 2 == 0 ? 0.08 + inset : 0.92 - inset;
    out.push_back({x, rows[i % 4]});
  }
  return out;
}

int default_fault_stage(const AssemblyPlan& plan, Scenario sc) {
  switch (sc) {
    case Scenario::Happy: return 0;
    case Scenario::CheatScrew:
      for (const auto& s : plan.stages)
        if (s.kind == StageKind::ScrewFastening) return s.ordinal;
      return 0;
    case Scenario::WrongPart: {
      int seen = 0;
      for (const auto& s : plan.stages)
        if (s.kind == StageKind::PartPlacement && ++seen == 2) return s.ordinal;
      return 0;
    }
    case Scenario::SkipAttempt: {
      // the pair whose targets sit closest together makes the early part look
      // most like the expected one
      int best = 0;
      double best_dist = 0;
      for (std::size_t i = 0; i + 1 < plan.stages.size(); ++i) {
        const auto& a = plan.stages[i];
        const auto& b = plan.stages[i + 1];
        if (a.kind != StageKind::PartPlacement || b.kind != StageKind::PartPlacement) continue;
        const double dist = std::hypot(a.target->cx - b.target->cx, a.target->cy - b.target->cy);
        if (!best || dist < best_dist) {
          best = a.ordinal;
          best_dist = dist;
        }
      }
      return best;
    }
  }
  return 0;
}

std::optional<PartClass> default_wrong_part(const AssemblyPlan& plan, int stage) {
  const auto& st = plan.stage(stage);
  std::optional<PartClass> first;
  for (const auto& s : plan.stages) {
    if (s.ordinal <= stage || s.kind != StageKind::PartPlacement) continue;
    if (s.grasp != st.grasp || s.part == st.part) continue;
    if (s.part == PartClass::Platter) return s.part;
    if (!first) first = s.part;
  }
  return first;
}

}  // namespace

Simulation simulate_scenario(const AssemblyPlan& plan, Scenario scenario, std::uint64_t seed,
                             const SimulationOptions& opts) {
  if (!validate_plan(plan).empty())
    throw ValidationError(fmt::format("plan '{}' is not valid", plan.plan_id));
  if (opts.frame_ms <= 0 || opts.hole_report_ms <= 0)
    throw ValidationError("simulation periods must be positive");

  std::mt19937_64 rng(seed);
  Script script(rng);
  Simulation sim;
  auto& truth = sim.truth;
  truth.earliest_complete_ms.assign(plan.size(), 0);
  truth.fault_stage = opts.fault_stage.value_or(default_fault_stage(plan, scenario));
  if (scenario == Scenario::WrongPart)
    truth.fault_part = opts.wrong_part ? opts.wrong_part
                                       : default_wrong_part(plan, truth.fault_stage);
  if (scenario == Scenario::SkipAttempt && truth.fault_stage > 0 &&
      truth.fault_stage < static_cast<int>(plan.size()))
    truth.fault_part = plan.stage(truth.fault_stage + 1).part;
  if (scenario != Scenario::Happy && truth.fault_stage == 0)
    throw ValidationError(
        fmt::format("plan '{}' has no stage suited to scenario {}", plan.plan_id,
                    to_string(scenario)));

  // Lay out every part the plan installs on the tray, plus the case and screws.
  std::vector<PartClass> placed;
  for (const auto& s : plan.stages)
    if (s.kind == StageKind::PartPlacement &&
        std::find(placed.begin(), placed.end(), *s.part) == placed.end())
      placed.push_back(*s.part);
  const auto slots = tray_slots(placed.size());
  for (std::size_t i = 0; i < placed.size(); ++i)
    script.place(placed[i], slots[i].x, slots[i].y, kTrayDepth);
  if (std::find(placed.begin(), placed.end(), PartClass::HDDCase) == placed.end())
    script.place(PartClass::HDDCase, 0.5, 0.55, kCaseDepth);
  const Slot screw_tray{0.5, 0.93};
  script.place(PartClass::Screw, screw_tray.x, screw_tray.y, kTrayDepth);

  std::uniform_real_distribution<double> offset(-0.005, 0.005);
  std::uniform_real_distribution<double> settle(-2.0, 2.0);
  Slot work{0.5, 0.55};
  TimeMs last_ready = 0;

  auto place_part = [&](const StageSpec& s, PartClass part, const Region& target,
                        std::optional<double> depth) -> TimeMs {
    const Action grip = size_class(part);
    script.grasp(part, grip, 1.8);
    std::optional<double> rotate;
    if (s.angle && part == *s.part) rotate = canonicalize_angle(s.angle->expected_deg + settle(rng));
    const double d = depth.value_or(kCaseDepth);
    script.carry(part, grip, target.cx + offset(rng), target.cy + offset(rng), d, 2.0, rotate);
    const TimeMs arrived = script.now();
    script.hold(part, grip, 1.2);
    return arrived;
  };

  auto fasten = [&](const std::string& hole) -> TimeMs {
    script.gesture(Action::CatchSmall, screw_tray.x, screw_tray.y, screw_tray.x, screw_tray.y,
                   1.8);
    script.gesture(Action::CatchSmall, screw_tray.x, screw_tray.y, work.x, work.y, 1.0);
    const TimeMs seated = script.tighten(hole, work.x, work.y, 2.4, true);
    script.idle(2.3);
    return seated;
  };

  script.idle(3.0);
  for (const auto& s : plan.stages) {
    const bool fault = s.ordinal == truth.fault_stage;
    switch (s.kind) {
      case StageKind::PartPlacement: {
        script.idle(4.0);
        if (fault && scenario == Scenario::WrongPart && truth.fault_part) {
          script.grasp(*truth.fault_part, size_class(*truth.fault_part), 2.2);
          script.idle(1.5);
        }
        if (fault && scenario == Scenario::SkipAttempt && truth.fault_part) {
          const PartClass early = *truth.fault_part;
          const Key home = script.where(early);
          const Action grip = size_class(early);
          script.grasp(early, grip, 1.8);
          script.carry(early, grip, s.target->cx, s.target->cy,
                       s.expected_depth_mm.value_or(kCaseDepth), 2.0);
          script.hold(early, grip, 1.2);
          script.idle(1.5);
          script.grasp(early, grip, 1.2);
          script.carry(early, grip, home.x, home.y, home.depth, 2.0);
          script.idle(1.0);
        }
        const TimeMs arrived = place_part(s, *s.part, *s.target, s.expected_depth_mm);
        last_ready = std::max(last_ready, arrived);
        truth.earliest_complete_ms[static_cast<std::size_t>(s.ordinal - 1)] = last_ready;
        work = {s.target->cx, s.target->cy};
        script.idle(1.0);
        break;
      }
      case StageKind::ScrewFastening: {
        if (fault && scenario == Scenario::CheatScrew) {
          // fastening motion with no screw in hand
          script.gesture(Action::CatchSmall, screw_tray.x, screw_tray.y, work.x, work.y, 1.0);
          script.tighten(s.holes.front(), work.x, work.y, 2.4, false);
          script.idle(3.0);
        }
        TimeMs done = last_ready;
        for (const auto& h : s.holes) done = std::max(done, fasten(h));
        last_ready = done;
        truth.earliest_complete_ms[static_cast<std::size_t>(s.ordinal - 1)] = last_ready;
        break;
      }
      case StageKind::Verification:
        truth.earliest_complete_ms[static_cast<std::size_t>(s.ordinal - 1)] = last_ready;
        script.idle(6.0);
        break;
      case StageKind::Completion:
        truth.earliest_complete_ms[static_cast<std::size_t>(s.ordinal - 1)] = last_ready;
        script.gesture(Action::Done, 0.5, 0.5, 0.5, 0.5, 2.0);
        script.idle(1.0);
        break;
    }
  }
  truth.end_ms = script.now();

  // -- render the timeline into records -------------------------------------
  const ReferenceDescriptor arm_ref = make_reference(fixtures::arm_image(128));
  const GrayGrid arm_img = fixtures::arm_image(128);
  std::map<long, ObjAngle> angle_cache;
  auto measure = [&](double rot) {
    const long key = std::lround(rot * 100.0);
    auto it = angle_cache.find(key);
    if (it == angle_cache.end())
      it = angle_cache
               .emplace(key, estimate_angle(rotate_grid(arm_img, static_cast<double>(key) / 100.0),
                                            arm_ref))
               .first;
    return it->second;
  };

  std::normal_distribution<double> center_noise(0.0, 0.002);
  std::normal_distribution<double> depth_noise(0.0, 1.2);
  std::normal_distribution<double> point_noise(0.0, 0.0015);
  std::uniform_real_distribution<double> conf(0.86, 0.97);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> spike(150.0, 300.0);
  std::uniform_real_distribution<double> hole_conf(0.8, 0.97);
  std::uniform_real_distribution<double> junk_conf(0.05, 0.25);

  auto clamp01 = [](double v) { return std::clamp(v, 0.0, 1.0); };
  sim.records.push_back(ReplayMeta{kReplaySchema, plan.plan_id, opts.frame_ms});

  const bool arm_tracked = std::any_of(plan.stages.begin(), plan.stages.end(), [](const auto& s) {
    return s.angle && s.part == PartClass::ActuatorArm;
  });
  std::vector<std::string> hole_ids;
  for (const auto& [id, _] : plan.holes) hole_ids.push_back(id);

  TimeMs next_holes = 0;
  for (TimeMs t = 0; t <= truth.end_ms; t += opts.frame_ms) {
    DetectionFrame det{t, {}};
    for (const auto& [part, _] : script.parts()) {
      const auto k = *script.part_at(part, t);
      const Size sz = part_size(part);
      Detection d;
      d.part = part;
      d.cx = clamp01(k.x + center_noise(rng));
      d.cy = clamp01(k.y + center_noise(rng));
      d.w = sz.w;
      d.h = sz.h;
      d.conf = conf(rng);
      double depth = k.depth + std::clamp(depth_noise(rng), -3.0, 3.0);
      if (unit(rng) < 0.01) depth += unit(rng) < 0.5 ? -spike(rng) : spike(rng);
      d.depth_mm = depth;
      det.detections.push_back(d);
    }
    sim.records.push_back(std::move(det));

    if (const auto* h = script.hand_at(t)) {
      const double u = static_cast<double>(t - h->start) / static_cast<double>(h->end - h->start);
      const double phase = h->phase0 + static_cast<double>(t - h->start) / 1000.0;
      auto frame = synthetic::render(synthetic::hand_pose(h->pose, phase - std::floor(phase)),
                                     lerp(h->x0, h->x1, u), lerp(h->y0, h->y1, u), kHandScale, t);
      HandRecord rec{t, 0, {}};
      for (auto p : frame.points)
        rec.points.push_back({p.x + point_noise(rng), p.y + point_noise(rng), p.z});
      sim.records.push_back(std::move(rec));
    }

    if (arm_tracked) {
      ObjAngle a = measure(script.rotation_at(t));
      a.t_ms = t;
      sim.records.push_back(a);
    }

    if (t >= next_holes) {
      link::Holes hr{t, {}};
      for (const auto& id : hole_ids) {
        hr.reports.push_back({id, script.hole_at(id, t), hole_conf(rng), t});
        if (unit(rng) < 0.03) {
          const auto junk = static_cast<HoleState>(rng() % 3);
          hr.reports.push_back({id, junk, junk_conf(rng), t});
        }
      }
      sim.records.push_back(std::move(hr));
      next_holes += opts.hole_report_ms;
    }
  }
  return sim;
}

}  // namespace sv
