#include "stageverify/verifier.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include <fmt/format.h>

namespace sv {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 7> kPhaseNames = {
    "PartAssembly",  "PartAssemblyCorrection", "PartVerification", "ScrewAssembly",
    "ScrewAssemblyCorrection", "StageComplete", "Final"};

constexpr std::array<std::string_view, 6> kErrorNames = {
    "WrongPart", "WrongPlacement", "WrongAngle", "ScrewNotTightened", "NullAction",
    "CameraOffline"};

std::string num(double v) { return fmt::format("{}", std::round(v * 10.0) / 10.0); }

std::string region_text(const Region& r) {
  return fmt::format("{},{},{},{}", r.cx, r.cy, r.w, r.h);
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) {
    if (!out.empty()) out += ',';
    out += s;
  }
  return out;
}

}  // namespace

std::string_view to_string(Phase p) { return kPhaseNames.at(static_cast<std::size_t>(p)); }

Phase parse_phase(std::string_view s) {
  for (std::size_t i = 0; i < kPhaseNames.size(); ++i)
    if (kPhaseNames[i] == s) return static_cast<Phase>(i);
  throw ValidationError(fmt::format("unknown phase '{}'", s));
}

std::string_view to_string(ErrorKind k) {
  return kErrorNames.at(static_cast<std::size_t>(k));
}

ErrorKind parse_error_kind(std::string_view s) {
  for (std::size_t i = 0; i < kErrorNames.size(); ++i)
    if (kErrorNames[i] == s) return static_cast<ErrorKind>(i);
  throw ValidationError(fmt::format("unknown error kind '{}'", s));
}

std::string_view event_type(const VerifierEvent& e) {
  return std::visit(
      [](const auto& ev) -> std::string_view {
        using T = std::decay_t<decltype(ev)>;
        if constexpr (std::is_same_v<T, StageEntered>) return "StageEntered";
        else if constexpr (std::is_same_v<T, StageCompleted>) return "StageCompleted";
        else if constexpr (std::is_same_v<T, ErrorDetected>) return "ErrorDetected";
        else if constexpr (std::is_same_v<T, Guidance>) return "Guidance";
        else return "AssemblyComplete";
      },
      e);
}

json to_json(const VerifierEvent& e) {
  json j = std::visit(
      [](const auto& ev) -> json {
        using T = std::decay_t<decltype(ev)>;
        if constexpr (std::is_same_v<T, StageEntered>) {
          return {{"ordinal", ev.ordinal}};
        } else if constexpr (std::is_same_v<T, StageCompleted>) {
          return {{"ordinal", ev.ordinal}, {"duration_ms", ev.duration_ms}};
        } else if constexpr (std::is_same_v<T, ErrorDetected>) {
          return {{"kind", std::string(to_string(ev.kind))},
                  {"detail", ev.detail},
                  {"params", ev.params}};
        } else if constexpr (std::is_same_v<T, Guidance>) {
          return {{"text_key", ev.text_key}, {"stage", ev.stage}, {"params", ev.params}};
        } else {
          return {{"total_ms", ev.total_ms}};
        }
      },
      e);
  j["type"] = std::string(event_type(e));
  return j;
}

VerifierEvent event_from_json(const json& j) {
  try {
    const auto type = j.at("type").get<std::string>();
    if (type == "StageEntered") return StageEntered{j.at("ordinal").get<int>()};
    if (type == "StageCompleted")
      return StageCompleted{j.at("ordinal").get<int>(), j.at("duration_ms").get<TimeMs>()};
    if (type == "ErrorDetected")
      return ErrorDetected{parse_error_kind(j.at("kind").get<std::string>()),
                           j.at("detail").get<std::string>(),
                           j.at("params").get<Params>()};
    if (type == "Guidance")
      return Guidance{j.at("text_key").get<std::string>(), j.at("stage").get<int>(),
                      j.at("params").get<Params>()};
    if (type == "AssemblyComplete") return AssemblyComplete{j.at("total_ms").get<TimeMs>()};
    throw ValidationError(fmt::format("unknown event type '{}'", type));
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("event: {}", e.what()));
  }
}

HoleState FusedObservation::hole(const std::string& id) const {
  auto it = holes.find(id);
  return it == holes.end() ? HoleState::Unknown : it->second;
}

Guidance guidance_text(const ErrorDetected& error, const StageSpec& stage) {
  Guidance g;
  g.stage = stage.ordinal;
  g.params = error.params;
  switch (error.kind) {
    case ErrorKind::WrongPart:
      g.text_key = "guidance.wrong_part";
      if (stage.part) g.params["expected"] = std::string(to_string(*stage.part));
      break;
    case ErrorKind::WrongPlacement:
      g.text_key = "guidance.reposition_part";
      if (stage.part) g.params["part"] = std::string(to_string(*stage.part));
      if (stage.target) g.params["target"] = region_text(*stage.target);
      break;
    case ErrorKind::WrongAngle:
      g.text_key = "guidance.rotate_part";
      break;
    case ErrorKind::ScrewNotTightened:
      g.text_key = "guidance.retighten";
      break;
    case ErrorKind::NullAction:
      g.text_key = "guidance.null_action";
      g.params["stage"] = stage.id;
      if (stage.part) g.params["expected"] = std::string(to_string(*stage.part));
      break;
    case ErrorKind::CameraOffline:
      g.text_key = "guidance.camera_offline";
      break;
  }
  return g;
}

namespace {

class Stepper {
 public:
  Stepper(const VerifierState& s, const FusedObservation& obs, const AssemblyPlan& plan,
          const ThresholdConfig& cfg)
      : s_(s), obs_(obs), plan_(plan), cfg_(cfg), stage_(plan.stage(s.stage_ordinal)) {}

  StepResult run() {
    track_tightening();
    if (has_evidence()) s_.last_evidence_ms = obs_.tick_ms;

    switch (s_.phase) {
      case Phase::PartAssembly:
      case Phase::PartAssemblyCorrection:
        part_assembly();
        break;
      case Phase::PartVerification:
        if (stage_.kind == StageKind::Verification)
          verification();
        else
          part_verification();
        break;
      case Phase::ScrewAssembly:
      case Phase::ScrewAssemblyCorrection:
        screw_assembly();
        break;
      case Phase::StageComplete:
        complete_stage();
        break;
      case Phase::Final:
        break;
    }
    return {std::move(s_), std::move(events_)};
  }

 private:
  void track_tightening() {
    const bool high = obs_.acf && obs_.acf->tightening >= cfg_.tau_act;
    if (high) {
      s_.last_tightening_ms = obs_.tick_ms;
      if (!s_.tightening_active) {
        s_.tightening_active = true;
        if (!s_.tightening_check_due) s_.hole_done_since_tightening = false;
      }
    } else if (s_.tightening_active) {
      s_.tightening_active = false;
      s_.tightening_check_due = obs_.tick_ms + cfg_.action_window_ms;
    }
  }

  bool has_evidence() const {
    if (obs_.acf) return true;
    if (!obs_.detections) return false;
    return std::any_of(obs_.detections->detections.begin(),
                       obs_.detections->detections.end(),
                       [&](const Detection& d) { return d.conf >= cfg_.tau_det; });
  }

  const Detection* best_detection(PartClass p) const {
    if (!obs_.detections) return nullptr;
    const Detection* best = nullptr;
    for (const auto& d : obs_.detections->detections)
      if (d.part == p && d.conf >= cfg_.tau_det && (!best || d.conf > best->conf))
        best = &d;
    return best;
  }

  double acf(Action a) const { return obs_.acf ? obs_.acf->get(a) : 0.0; }

  bool near_hand(const Detection& d) const {
    const Rect part = box_of(d);
    for (const auto& [x, y] : obs_.hand_wrists)
      if (part.intersects({x, y, cfg_.hand_box, cfg_.hand_box})) return true;
    return false;
  }

  bool grasp_condition() const {
    const Detection* d = best_detection(*stage_.part);
    if (!d || acf(*stage_.grasp) < cfg_.tau_act) return false;
    // without hand geometry (classifier bypass) the region check cannot apply
    return obs_.hand_wrists.empty() || near_hand(*d);
  }

  /// Only parts the plan has yet to install can be grabbed by mistake.
  bool pending_part(PartClass p) const {
    for (const auto& st : plan_.stages)
      if (st.ordinal > s_.stage_ordinal && st.kind == StageKind::PartPlacement &&
          st.part == p)
        return true;
    return false;
  }

  std::optional<PartClass> wrong_grasp() const {
    if (obs_.hand_wrists.empty() || !obs_.detections) return std::nullopt;
    const Detection* best = nullptr;
    for (const auto& d : obs_.detections->detections) {
      if (d.part == *stage_.part || d.conf < cfg_.tau_det) continue;
      if (!pending_part(d.part) || !near_hand(d)) continue;
      if (acf(size_class(d.part)) < cfg_.tau_act) continue;
      if (!best || d.conf > best->conf) best = &d;
    }
    if (!best) return std::nullopt;
    return best->part;
  }

  void emit_error(ErrorKind kind, std::string detail, Params params,
                  std::optional<Phase> correction, std::string hole = {}) {
    ErrorDetected err{kind, std::move(detail), std::move(params)};
    Guidance g = guidance_text(err, stage_);
    events_.emplace_back(err);
    events_.emplace_back(g);
    s_.last_guidance_ms = obs_.tick_ms;
    if (correction) {
      s_.pending_error = PendingError{kind, obs_.tick_ms, std::move(hole), g};
      s_.phase = *correction;
      s_.hold_counter = 0;
    }
  }

  void repeat_guidance() {
    if (!s_.pending_error) return;
    if (obs_.tick_ms - s_.last_guidance_ms >= cfg_.guidance_repeat_ms) {
      events_.emplace_back(s_.pending_error->guidance);
      s_.last_guidance_ms = obs_.tick_ms;
    }
  }

  void part_assembly() {
    if (grasp_condition()) {
      s_.wrong_candidate.reset();
      s_.wrong_counter = 0;
      if (++s_.hold_counter >= cfg_.hold_ticks) {
        s_.phase = Phase::PartVerification;
        s_.hold_counter = 0;
        s_.violation_counter = 0;
        s_.pending_error.reset();
      }
      return;
    }
    s_.hold_counter = 0;

    if (s_.phase == Phase::PartAssemblyCorrection) {
      repeat_guidance();
      return;
    }

    const auto wrong = wrong_grasp();
    if (wrong && wrong == s_.wrong_candidate) {
      ++s_.wrong_counter;
    } else {
      s_.wrong_candidate = wrong;
      s_.wrong_counter = wrong ? 1 : 0;
    }
    if (wrong && s_.wrong_counter >= cfg_.hold_ticks) {
      const auto got = std::string(to_string(*wrong));
      s_.wrong_candidate.reset();
      s_.wrong_counter = 0;
      emit_error(ErrorKind::WrongPart,
                 fmt::format("grasped {} instead of {}", got, to_string(*stage_.part)),
                 {{"got", got}}, Phase::PartAssemblyCorrection);
      return;
    }

    if (obs_.tick_ms - s_.last_evidence_ms >= cfg_.null_window_ms) {
      s_.last_evidence_ms = obs_.tick_ms;
      emit_error(ErrorKind::NullAction,
                 fmt::format("no action or detection for {} ms", cfg_.null_window_ms),
                 {}, std::nullopt);
    }
  }

  bool depth_ok(PartClass p, const std::optional<double>& expected) const {
    if (!expected) return true;
    auto it = obs_.depth_mm.find(p);
    return it != obs_.depth_mm.end() && std::fabs(it->second - *expected) <= cfg_.depth_tol_mm;
  }

  bool angle_ok(const std::optional<AngleConstraint>& c) const {
    if (!c) return true;
    return obs_.angle && circ_diff(obs_.angle->degrees, c->expected_deg) <= c->tol_deg;
  }

  void part_verification() {
    const PartClass part = *stage_.part;
    const Detection* d = best_detection(part);
    const bool inside = d && stage_.target->contains(d->cx, d->cy);
    const bool depth = depth_ok(part, stage_.expected_depth_mm);
    const bool angle = angle_ok(stage_.angle);

    if (inside && depth && angle) {
      s_.violation_counter = 0;
      if (++s_.hold_counter >= cfg_.hold_ticks) {
        s_.phase = stage_.holes.empty() ? Phase::StageComplete : Phase::ScrewAssembly;
        s_.hold_counter = 0;
      }
      return;
    }
    s_.hold_counter = 0;

    const bool released = !obs_.acf || acf(*stage_.grasp) < cfg_.tau_act;
    if (!(d && released)) {
      s_.violation_counter = 0;
      return;
    }
    if (++s_.violation_counter < cfg_.hold_ticks) return;
    s_.violation_counter = 0;

    if (inside && depth) {
      const double measured = obs_.angle ? obs_.angle->degrees : 0.0;
      emit_error(ErrorKind::WrongAngle,
                 obs_.angle ? fmt::format("{} placed at {} deg", to_string(part), num(measured))
                            : fmt::format("{} angle not measured", to_string(part)),
                 {{"measured", obs_.angle ? num(measured) : std::string("none")},
                  {"expected", num(stage_.angle->expected_deg)},
                  {"tol", num(stage_.angle->tol_deg)}},
                 Phase::PartAssemblyCorrection);
    } else {
      Params p{{"got", fmt::format("{},{}", num(d->cx), num(d->cy))}};
      if (stage_.expected_depth_mm) {
        auto it = obs_.depth_mm.find(part);
        p["depth"] = it == obs_.depth_mm.end() ? std::string("none") : num(it->second);
        p["expected_depth"] = num(*stage_.expected_depth_mm);
      }
      emit_error(ErrorKind::WrongPlacement,
                 fmt::format("{} released outside its target", to_string(part)),
                 std::move(p), Phase::PartAssemblyCorrection);
    }
  }

  /// True while any of `holes` is Unknown; reports CameraOffline once per outage.
  bool camera_blocked(const std::vector<std::string>& holes) {
    std::vector<std::string> unknown;
    for (const auto& h : holes)
      if (obs_.hole(h) == HoleState::Unknown) unknown.push_back(h);
    if (unknown.empty()) {
      s_.camera_offline = false;
      return false;
    }
    // a stale camera must not turn into a failed tightening
    s_.tightening_check_due.reset();
    s_.hold_counter = 0;
    if (!s_.camera_offline) {
      s_.camera_offline = true;
      emit_error(ErrorKind::CameraOffline,
                 fmt::format("no fresh state for hole(s) {}", join(unknown)),
                 {{"holes", join(unknown)}}, std::nullopt);
    }
    return true;
  }

  void verification() {
    if (camera_blocked(stage_.holes)) return;
    bool ok = true;
    for (const auto& h : stage_.holes) ok = ok && obs_.hole(h) == HoleState::Assembled;
    for (PartClass p : stage_.verify_parts) {
      if (!ok) break;
      const Detection* d = best_detection(p);
      const StageSpec* placed = plan_.placement_of(p);
      ok = d != nullptr;
      if (ok && placed) {
        ok = placed->target->contains(d->cx, d->cy) &&
             depth_ok(p, placed->expected_depth_mm);
      }
    }
    if (!ok) {
      s_.hold_counter = 0;
      return;
    }
    if (++s_.hold_counter >= cfg_.hold_ticks) {
      s_.phase = Phase::StageComplete;
      s_.hold_counter = 0;
    }
  }

  bool hole_done(const std::string& h) const {
    return std::find(s_.holes_done.begin(), s_.holes_done.end(), h) != s_.holes_done.end();
  }

  void screw_assembly() {
    if (camera_blocked(stage_.holes)) return;

    const bool recent_tightening =
        s_.last_tightening_ms &&
        obs_.tick_ms - *s_.last_tightening_ms <= cfg_.action_window_ms;
    bool newly_done = false;
    for (const auto& h : stage_.holes) {
      if (hole_done(h)) continue;
      if (obs_.hole(h) == HoleState::Assembled && recent_tightening) {
        s_.holes_done.push_back(h);
        s_.hole_done_since_tightening = true;
        newly_done = true;
      }
    }
    if (newly_done) {
      // keep plan order so snapshots are canonical
      std::vector<std::string> ordered;
      for (const auto& h : stage_.holes)
        if (hole_done(h)) ordered.push_back(h);
      s_.holes_done = std::move(ordered);
    }

    if (s_.phase == Phase::ScrewAssemblyCorrection) {
      if (s_.pending_error && hole_done(s_.pending_error->hole)) {
        s_.phase = Phase::ScrewAssembly;
        s_.pending_error.reset();
        s_.tightening_check_due.reset();
        return;
      }
    } else if (s_.holes_done.size() == stage_.holes.size()) {
      s_.phase = Phase::StageComplete;
      s_.tightening_check_due.reset();
      return;
    }

    if (s_.tightening_check_due && obs_.tick_ms >= *s_.tightening_check_due) {
      const bool failed = !s_.hole_done_since_tightening;
      s_.tightening_check_due.reset();
      s_.hole_done_since_tightening = false;
      if (failed) {
        std::string target;
        for (const auto& h : stage_.holes)
          if (!hole_done(h)) {
            target = h;
            break;
          }
        emit_error(ErrorKind::ScrewNotTightened,
                   fmt::format("tightening ended with hole {} {}", target,
                               to_string(obs_.hole(target))),
                   {{"hole", target}}, Phase::ScrewAssemblyCorrection, target);
        return;
      }
    }
    if (s_.phase == Phase::ScrewAssemblyCorrection) repeat_guidance();
  }

  void enter_stage(int ordinal) {
    const StageSpec& next = plan_.stage(ordinal);
    s_.stage_ordinal = ordinal;
    s_.stage_entered_ms = obs_.tick_ms;
    s_.hold_counter = 0;
    s_.pending_error.reset();
    s_.holes_done.clear();
    s_.wrong_candidate.reset();
    s_.wrong_counter = 0;
    s_.violation_counter = 0;
    s_.last_evidence_ms = obs_.tick_ms;
    s_.camera_offline = false;
    s_.tightening_check_due.reset();
    // an action still running belongs to the stage just finished
    s_.hole_done_since_tightening = s_.tightening_active;
    events_.emplace_back(StageEntered{ordinal});
    switch (next.kind) {
      case StageKind::PartPlacement: s_.phase = Phase::PartAssembly; break;
      case StageKind::ScrewFastening: s_.phase = Phase::ScrewAssembly; break;
      case StageKind::Verification: s_.phase = Phase::PartVerification; break;
      case StageKind::Completion:
        s_.phase = Phase::Final;
        events_.emplace_back(StageCompleted{ordinal, 0});
        events_.emplace_back(AssemblyComplete{obs_.tick_ms - s_.started_ms});
        break;
    }
  }

  void complete_stage() {
    events_.emplace_back(
        StageCompleted{s_.stage_ordinal, obs_.tick_ms - s_.stage_entered_ms});
    if (s_.stage_ordinal == static_cast<int>(plan_.size())) {
      s_.phase = Phase::Final;
      events_.emplace_back(AssemblyComplete{obs_.tick_ms - s_.started_ms});
      return;
    }
    enter_stage(s_.stage_ordinal + 1);
  }

  VerifierState s_;
  const FusedObservation& obs_;
  const AssemblyPlan& plan_;
  const ThresholdConfig& cfg_;
  const StageSpec& stage_;
  std::vector<VerifierEvent> events_;
};

Phase entry_phase(StageKind k) {
  switch (k) {
    case StageKind::PartPlacement: return Phase::PartAssembly;
    case StageKind::ScrewFastening: return Phase::ScrewAssembly;
    case StageKind::Verification: return Phase::PartVerification;
    case StageKind::Completion: return Phase::Final;
  }
  return Phase::Final;
}

void check_consistent(const VerifierState& s, const AssemblyPlan& plan) {
  if (s.stage_ordinal < 1 || s.stage_ordinal > static_cast<int>(plan.size()))
    throw InconsistentState(fmt::format("stage {} is not in plan '{}' ({} stages)",
                                        s.stage_ordinal, plan.plan_id, plan.size()));
  const StageSpec& st = plan.stage(s.stage_ordinal);
  bool ok = true;
  switch (s.phase) {
    case Phase::PartAssembly:
    case Phase::PartAssemblyCorrection:
      ok = st.kind == StageKind::PartPlacement;
      break;
    case Phase::PartVerification:
      ok = st.kind == StageKind::PartPlacement || st.kind == StageKind::Verification;
      break;
    case Phase::ScrewAssembly:
    case Phase::ScrewAssemblyCorrection:
      ok = !st.holes.empty() && st.kind != StageKind::Verification;
      break;
    case Phase::StageComplete:
    case Phase::Final:
      break;
  }
  if (!ok)
    throw InconsistentState(fmt::format("phase {} does not fit stage '{}'",
                                        to_string(s.phase), st.id));
  for (const auto& h : s.holes_done)
    if (std::find(st.holes.begin(), st.holes.end(), h) == st.holes.end())
      throw InconsistentState(fmt::format("hole '{}' is not part of stage '{}'", h, st.id));
}

}  // namespace

StepResult start(const AssemblyPlan& plan, TimeMs t_ms) {
  if (plan.stages.empty()) throw InconsistentState("plan has no stages");
  StepResult r;
  r.state.stage_ordinal = 1;
  r.state.stage_entered_ms = t_ms;
  r.state.started_ms = t_ms;
  r.state.last_evidence_ms = t_ms;
  r.state.phase = entry_phase(plan.stage(1).kind);
  r.events.emplace_back(StageEntered{1});
  if (r.state.phase == Phase::Final) {
    r.events.emplace_back(StageCompleted{1, 0});
    r.events.emplace_back(AssemblyComplete{0});
  }
  return r;
}

StepResult step(const VerifierState& state, const FusedObservation& obs,
                const AssemblyPlan& plan, const ThresholdConfig& cfg) {
  check_consistent(state, plan);
  return Stepper(state, obs, plan, cfg).run();
}

namespace {

json opt_time(const std::optional<TimeMs>& t) { return t ? json(*t) : json(nullptr); }

std::optional<TimeMs> get_opt_time(const json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_null()) return std::nullopt;
  return v.get<TimeMs>();
}

}  // namespace

json to_json(const VerifierState& s) {
  json pending = nullptr;
  if (s.pending_error) {
    const auto& p = *s.pending_error;
    pending = {{"kind", std::string(to_string(p.kind))},
               {"t_ms", p.t_ms},
               {"hole", p.hole},
               {"guidance", to_json(VerifierEvent{p.guidance})}};
  }
  return {
      {"schema", kStateSchema},
      {"stage_ordinal", s.stage_ordinal},
      {"phase", std::string(to_string(s.phase))},
      {"hold_counter", s.hold_counter},
      {"pending_error", pending},
      {"holes_done", s.holes_done},
      {"stage_entered_ms", s.stage_entered_ms},
      {"started_ms", s.started_ms},
      {"last_evidence_ms", s.last_evidence_ms},
      {"last_guidance_ms", s.last_guidance_ms},
      {"wrong_candidate", s.wrong_candidate
                              ? json(std::string(to_string(*s.wrong_candidate)))
                              : json(nullptr)},
      {"wrong_counter", s.wrong_counter},
      {"violation_counter", s.violation_counter},
      {"tightening_active", s.tightening_active},
      {"last_tightening_ms", opt_time(s.last_tightening_ms)},
      {"tightening_check_due", opt_time(s.tightening_check_due)},
      {"hole_done_since_tightening", s.hole_done_since_tightening},
      {"camera_offline", s.camera_offline},
  };
}

VerifierState state_from_json(const json& j) {
  try {
    if (j.at("schema").get<int>() != kStateSchema)
      throw ValidationError(fmt::format("unsupported state schema {}", j.at("schema").dump()));
    VerifierState s;
    s.stage_ordinal = j.at("stage_ordinal").get<int>();
    s.phase = parse_phase(j.at("phase").get<std::string>());
    s.hold_counter = j.at("hold_counter").get<int>();
    const auto& p = j.at("pending_error");
    if (!p.is_null()) {
      PendingError pe;
      pe.kind = parse_error_kind(p.at("kind").get<std::string>());
      pe.t_ms = p.at("t_ms").get<TimeMs>();
      pe.hole = p.at("hole").get<std::string>();
      auto g = event_from_json(p.at("guidance"));
      if (!std::holds_alternative<Guidance>(g))
        throw ValidationError("pending guidance has the wrong type");
      pe.guidance = std::get<Guidance>(g);
      s.pending_error = std::move(pe);
    }
    s.holes_done = j.at("holes_done").get<std::vector<std::string>>();
    s.stage_entered_ms = j.at("stage_entered_ms").get<TimeMs>();
    s.started_ms = j.at("started_ms").get<TimeMs>();
    s.last_evidence_ms = j.at("last_evidence_ms").get<TimeMs>();
    s.last_guidance_ms = j.at("last_guidance_ms").get<TimeMs>();
    const auto& wc = j.at("wrong_candidate");
    if (!wc.is_null()) s.wrong_candidate = parse_part(wc.get<std::string>());
    s.wrong_counter = j.at("wrong_counter").get<int>();
    s.violation_counter = j.at("violation_counter").get<int>();
    s.tightening_active = j.at("tightening_active").get<bool>();
    s.last_tightening_ms = get_opt_time(j, "last_tightening_ms");
    s.tightening_check_due = get_opt_time(j, "tightening_check_due");
    s.hole_done_since_tightening = j.at("hole_done_since_tightening").get<bool>();
    s.camera_offline = j.at("camera_offline").get<bool>();
    if (s.stage_ordinal < 1) throw ValidationError("stage_ordinal must be >= 1");
    return s;
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("verifier state: {}", e.what()));
  }
}

}  // namespace sv
