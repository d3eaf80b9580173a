#include <doctest.h>

#include <algorithm>
#include <functional>

#include "fuzz.hpp"
#include "stageverify/verifier.hpp"

using namespace sv;

namespace {

template <class T>
int count(const std::vector<VerifierEvent>& ev) {
  return static_cast<int>(std::count_if(ev.begin(), ev.end(),
                                        [](const auto& e) { return std::holds_alternative<T>(e); }));
}

template <class T>
const T* find(const std::vector<VerifierEvent>& ev) {
  for (const auto& e : ev)
    if (const auto* p = std::get_if<T>(&e)) return p;
  return nullptr;
}

struct Driver {
  AssemblyPlan plan = builtin_hdd_plan();
  ThresholdConfig cfg;
  VerifierState st;
  TimeMs t = 0;
  std::vector<VerifierEvent> all;

  Driver() {
    auto r = start(plan, 0);
    st = r.state;
    all = r.events;
  }
  Driver(int ordinal, Phase phase) {
    st.stage_ordinal = ordinal;
    st.phase = phase;
  }

  std::vector<VerifierEvent> tick(const std::function<void(FusedObservation&)>& fill, int n = 1) {
    std::vector<VerifierEvent> out;
    for (int i = 0; i < n; ++i) {
      t += cfg.tick_ms;
      FusedObservation obs;
      obs.tick_ms = t;
      fill(obs);
      auto r = step(st, obs, plan, cfg);
      st = r.state;
      out.insert(out.end(), r.events.begin(), r.events.end());
    }
    all.insert(all.end(), out.begin(), out.end());
    return out;
  }
};

void detect(FusedObservation& o, PartClass p, double x, double y, double conf = 0.9) {
  if (!o.detections) o.detections = DetectionFrame{o.tick_ms, {}};
  o.detections->detections.push_back({p, x, y, 0.08, 0.08, conf, {}});
}

void acf(FusedObservation& o, double big, double small, double tight, double done = 0.05) {
  o.acf = ActionConfidence{big, small, tight, done, o.tick_ms};
}

auto grasp(PartClass p, Action a) {
  return [p, a](FusedObservation& o) {
    detect(o, p, 0.5, 0.5);
    o.hand_wrists.emplace_back(0.52, 0.5);
    acf(o, a == Action::CatchBig ? 0.95 : 0.1, a == Action::CatchSmall ? 0.95 : 0.1, 0.05);
  };
}

auto place(const AssemblyPlan& plan, PartClass p, std::optional<double> angle = {}) {
  const StageSpec* s = plan.placement_of(p);
  return [s, p, angle](FusedObservation& o) {
    detect(o, p, s->target->cx, s->target->cy);
    if (s->expected_depth_mm) o.depth_mm[p] = *s->expected_depth_mm + 3;
    if (angle) o.angle = ObjAngle{*angle, 0.9, o.tick_ms};
  };
}

auto holes(std::map<std::string, HoleState> h, double tight) {
  return [h, tight](FusedObservation& o) {
    o.holes = h;
    acf(o, 0.05, 0.2, tight);
  };
}

}  // namespace

TEST_CASE("start enters stage 1") {
  const auto plan = builtin_hdd_plan();
  const auto r = start(plan, 500);
  CHECK(r.state.stage_ordinal == 1);
  CHECK(r.state.phase == Phase::PartAssembly);
  CHECK(r.state.started_ms == 500);
  REQUIRE(r.events.size() == 1);
  CHECK(std::get<StageEntered>(r.events[0]).ordinal == 1);
}

TEST_CASE("grasp then placement completes a part stage") {
  Driver d;
  d.tick(grasp(PartClass::ActuatorBase, Action::CatchBig), d.cfg.hold_ticks - 1);
  CHECK(d.st.phase == Phase::PartAssembly);
  d.tick(grasp(PartClass::ActuatorBase, Action::CatchBig));
  CHECK(d.st.phase == Phase::PartVerification);

  d.tick(place(d.plan, PartClass::ActuatorBase), d.cfg.hold_ticks);
  CHECK(d.st.phase == Phase::StageComplete);
  const auto ev = d.tick([](FusedObservation&) {});
  REQUIRE(ev.size() == 2);
  CHECK(std::get<StageCompleted>(ev[0]).ordinal == 1);
  CHECK(std::get<StageCompleted>(ev[0]).duration_ms == d.t);
  CHECK(std::get<StageEntered>(ev[1]).ordinal == 2);
  CHECK(d.st.phase == Phase::PartAssembly);
  CHECK(count<ErrorDetected>(d.all) == 0);
}

TEST_CASE("grasp of the right part away from the hand does not count") {
  Driver d;
  d.tick([](FusedObservation& o) {
    detect(o, PartClass::ActuatorBase, 0.1, 0.1);
    o.hand_wrists.emplace_back(0.9, 0.9);
    acf(o, 0.95, 0.1, 0.05);
  }, 30);
  CHECK(d.st.phase == Phase::PartAssembly);
}

TEST_CASE("tightening without the screw seating") {
  Driver d(4, Phase::ScrewAssembly);
  const std::map<std::string, HoleState> empty = {{"E1", HoleState::Empty}, {"E2", HoleState::Empty}};
  // 2 s of tightening at 0.95
  auto ev = d.tick(holes(empty, 0.95), 61);
  CHECK(ev.empty());
  // tightening ends; the check falls due one action window later
  ev = d.tick(holes(empty, 0.1), static_cast<int>(d.cfg.action_window_ms / d.cfg.tick_ms) + 2);
  REQUIRE(count<ErrorDetected>(ev) == 1);
  const auto* err = find<ErrorDetected>(ev);
  CHECK(err->kind == ErrorKind::ScrewNotTightened);
  CHECK(err->params.at("hole") == "E1");
  CHECK(find<Guidance>(ev)->text_key == "guidance.retighten");
  CHECK(d.st.phase == Phase::ScrewAssemblyCorrection);
  CHECK(d.st.stage_ordinal == 4);
  CHECK(count<StageCompleted>(ev) == 0);

  // guidance repeats while nothing changes, never a second error
  ev = d.tick(holes(empty, 0.1), 100);
  CHECK(count<ErrorDetected>(ev) == 0);
  CHECK(count<Guidance>(ev) >= 1);

  // a real tightening seats E1 and resolves the correction
  d.tick(holes(empty, 0.95), 5);
  d.tick(holes({{"E1", HoleState::Assembled}, {"E2", HoleState::Empty}}, 0.95));
  CHECK(d.st.phase == Phase::ScrewAssembly);
  CHECK(d.st.holes_done == std::vector<std::string>{"E1"});
  d.tick(holes({{"E1", HoleState::Assembled}, {"E2", HoleState::Assembled}}, 0.95));
  CHECK(d.st.phase == Phase::StageComplete);
  ev = d.tick(holes({{"E1", HoleState::Assembled}, {"E2", HoleState::Assembled}}, 0.1));
  CHECK(std::get<StageCompleted>(ev[0]).ordinal == 4);
}

TEST_CASE("Assembled without any tightening does not complete a screw stage") {
  Driver d(4, Phase::ScrewAssembly);
  d.tick(holes({{"E1", HoleState::Assembled}, {"E2", HoleState::Assembled}}, 0.1), 200);
  CHECK(d.st.phase == Phase::ScrewAssembly);
  CHECK(d.st.holes_done.empty());
}

TEST_CASE("stale hole states report CameraOffline once and hold") {
  Driver d(4, Phase::ScrewAssembly);
  auto ev = d.tick(holes({}, 0.95), 30);
  CHECK(count<ErrorDetected>(ev) == 1);
  CHECK(find<ErrorDetected>(ev)->kind == ErrorKind::CameraOffline);
  CHECK(find<Guidance>(ev)->text_key == "guidance.camera_offline");
  ev = d.tick(holes({}, 0.1), 150);
  CHECK(ev.empty());
  CHECK(d.st.phase == Phase::ScrewAssembly);
  CHECK(d.st.stage_ordinal == 4);
  // back online, then offline again: a new outage is reported
  d.tick(holes({{"E1", HoleState::Empty}, {"E2", HoleState::Empty}}, 0.1));
  ev = d.tick(holes({{"E1", HoleState::Empty}}, 0.1));
  CHECK(count<ErrorDetected>(ev) == 1);
  CHECK(find<ErrorDetected>(ev)->params.at("holes") == "E2");
}

TEST_CASE("null observations") {
  Driver d;
  const auto before = d.st;
  auto ev = d.tick([](FusedObservation&) {}, static_cast<int>(d.cfg.null_window_ms / d.cfg.tick_ms) - 1);
  CHECK(ev.empty());
  CHECK(d.st == before);
  ev = d.tick([](FusedObservation&) {}, 2);
  REQUIRE(count<ErrorDetected>(ev) == 1);
  CHECK(find<ErrorDetected>(ev)->kind == ErrorKind::NullAction);
  CHECK(find<Guidance>(ev)->params.at("expected") == "ActuatorBase");
  CHECK(d.st.phase == Phase::PartAssembly);
}

TEST_CASE("grabbing a later part is a wrong part") {
  Driver d;
  d.tick(grasp(PartClass::ActuatorBase, Action::CatchBig), d.cfg.hold_ticks);
  d.tick(place(d.plan, PartClass::ActuatorBase), d.cfg.hold_ticks + 1);
  REQUIRE(d.st.stage_ordinal == 2);
  auto ev = d.tick(grasp(PartClass::Platter, Action::CatchBig), d.cfg.hold_ticks);
  REQUIRE(count<ErrorDetected>(ev) == 1);
  const auto* err = find<ErrorDetected>(ev);
  CHECK(err->kind == ErrorKind::WrongPart);
  const auto* g = find<Guidance>(ev);
  CHECK(g->text_key == "guidance.wrong_part");
  CHECK(g->params == Params{{"expected", "ActuatorArm"}, {"got", "Platter"}});
  CHECK(d.st.phase == Phase::PartAssemblyCorrection);

  // an already installed part in hand is not a wrong part
  Driver e;
  e.tick(grasp(PartClass::ActuatorBase, Action::CatchBig), e.cfg.hold_ticks);
  e.tick(place(e.plan, PartClass::ActuatorBase), e.cfg.hold_ticks + 1);
  ev = e.tick(grasp(PartClass::ActuatorBase, Action::CatchBig), 40);
  CHECK(count<ErrorDetected>(ev) == 0);

  // the right grasp leaves correction
  d.tick(grasp(PartClass::ActuatorArm, Action::CatchBig), d.cfg.hold_ticks);
  CHECK(d.st.phase == Phase::PartVerification);
  CHECK_FALSE(d.st.pending_error.has_value());
}

TEST_CASE("placement errors") {
  auto to_stage2_verification = [] {
    Driver d;
    d.tick(grasp(PartClass::ActuatorBase, Action::CatchBig), d.cfg.hold_ticks);
    d.tick(place(d.plan, PartClass::ActuatorBase), d.cfg.hold_ticks + 1);
    d.tick(grasp(PartClass::ActuatorArm, Action::CatchBig), d.cfg.hold_ticks);
    REQUIRE(d.st.phase == Phase::PartVerification);
    return d;
  };
  SUBCASE("wrong angle") {
    auto d = to_stage2_verification();
    auto ev = d.tick(place(d.plan, PartClass::ActuatorArm, 95.0), d.cfg.hold_ticks);
    REQUIRE(count<ErrorDetected>(ev) == 1);
    const auto* err = find<ErrorDetected>(ev);
    CHECK(err->kind == ErrorKind::WrongAngle);
    CHECK(err->params == Params{{"measured", "95"}, {"expected", "0"}, {"tol", "10"}});
    CHECK(find<Guidance>(ev)->text_key == "guidance.rotate_part");
    CHECK(d.st.phase == Phase::PartAssemblyCorrection);
  }
  SUBCASE("angle within tolerance across the wrap") {
    auto d = to_stage2_verification();
    d.tick(place(d.plan, PartClass::ActuatorArm, 354.0), d.cfg.hold_ticks);
    CHECK(d.st.phase == Phase::StageComplete);
  }
  SUBCASE("wrong placement") {
    auto d = to_stage2_verification();
    auto ev = d.tick([](FusedObservation& o) { detect(o, PartClass::ActuatorArm, 0.9, 0.9); },
                     d.cfg.hold_ticks);
    REQUIRE(count<ErrorDetected>(ev) == 1);
    CHECK(find<ErrorDetected>(ev)->kind == ErrorKind::WrongPlacement);
    CHECK(find<Guidance>(ev)->text_key == "guidance.reposition_part");
  }
  SUBCASE("still held is not a violation") {
    auto d = to_stage2_verification();
    auto ev = d.tick([](FusedObservation& o) {
      detect(o, PartClass::ActuatorArm, 0.9, 0.9);
      acf(o, 0.95, 0.1, 0.05);
    }, 100);
    CHECK(ev.empty());
  }
}

TEST_CASE("guidance templates") {
  const auto plan = builtin_hdd_plan();
  auto g = guidance_text({ErrorKind::WrongPart, "", {{"got", "Platter"}}}, plan.stage(2));
  CHECK(g.text_key == "guidance.wrong_part");
  CHECK(g.params == Params{{"expected", "ActuatorArm"}, {"got", "Platter"}});
  CHECK(g.stage == 2);
  g = guidance_text({ErrorKind::ScrewNotTightened, "", {{"hole", "H3"}}}, plan.stage(4));
  CHECK(g.text_key == "guidance.retighten");
  CHECK(g.params == Params{{"hole", "H3"}});
  const Params angle{{"measured", "95"}, {"expected", "0"}, {"tol", "10"}};
  g = guidance_text({ErrorKind::WrongAngle, "", angle}, plan.stage(2));
  CHECK(g.text_key == "guidance.rotate_part");
  CHECK(g.params == angle);
}

TEST_CASE("event and state JSON round trip") {
  Driver d;
  d.tick(grasp(PartClass::ActuatorBase, Action::CatchBig), 4);
  CHECK(state_from_json(to_json(d.st)) == d.st);
  Driver s(4, Phase::ScrewAssembly);
  s.tick(holes({{"E1", HoleState::Empty}, {"E2", HoleState::Empty}}, 0.95), 61);
  s.tick(holes({{"E1", HoleState::Empty}, {"E2", HoleState::Empty}}, 0.1), 70);
  REQUIRE(s.st.pending_error.has_value());
  CHECK(state_from_json(to_json(s.st)) == s.st);
  for (const auto& e : s.all) CHECK(event_from_json(to_json(e)) == e);
  auto j = to_json(s.st);
  j["schema"] = 99;
  CHECK_THROWS_AS(state_from_json(j), ValidationError);
}

TEST_CASE("state that does not fit the plan") {
  const auto plan = builtin_hdd_plan();
  ThresholdConfig cfg;
  FusedObservation obs;
  VerifierState s;
  s.stage_ordinal = 99;
  CHECK_THROWS_AS(step(s, obs, plan, cfg), InconsistentState);
  s.stage_ordinal = 1;
  s.phase = Phase::ScrewAssembly;
  CHECK_THROWS_AS(step(s, obs, plan, cfg), InconsistentState);
  s.stage_ordinal = 4;
  s.holes_done = {"K1"};
  CHECK_THROWS_AS(step(s, obs, plan, cfg), InconsistentState);
}

TEST_CASE("random sequences keep the stage invariants, serial and parallel agree") {
  const auto plan = builtin_hdd_plan();
  ThresholdConfig cfg;
  fuzz::Options opts{400, false};
  const auto serial = fuzz::run_serial(plan, cfg, 300, 42, opts);
  const auto parallel = fuzz::run_parallel(plan, cfg, 300, 42, opts);
  CHECK(serial == parallel);
  CHECK(serial.violations == 0);
  CHECK(serial.max_ordinal > 4);
  CHECK(fuzz::run_sequence(plan, cfg, 7, opts).max_ordinal ==
        fuzz::run_sequence(plan, cfg, 7, opts).max_ordinal);

  opts.cheat = true;
  const auto cheat = fuzz::run_parallel(plan, cfg, 300, 43, opts);
  CHECK(cheat.violations == 0);
  CHECK(cheat.screw_stages_completed == 0);
}
