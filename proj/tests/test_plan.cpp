#include <doctest.h>

#include <algorithm>

#include "stageverify/plan.hpp"

using namespace sv;

static bool has_rule(const std::vector<PlanDiagnostic>& d, PlanRule r) {
  return std::any_of(d.begin(), d.end(), [&](const PlanDiagnostic& x) { return x.rule == r; });
}

TEST_CASE("builtin plan has the 21 stages in order") {
  const auto plan = builtin_hdd_plan();
  REQUIRE(plan.size() == 21);
  using K = StageKind;
  const std::vector<std::pair<K, std::optional<PartClass>>> expected = {
      {K::PartPlacement, PartClass::ActuatorBase},
      {K::PartPlacement, PartClass::ActuatorArm},
      {K::PartPlacement, PartClass::ArmElectro},
      {K::ScrewFastening, {}},
      {K::Verification, {}},
      {K::PartPlacement, PartClass::ActuatorCover},
      {K::ScrewFastening, {}},
      {K::Verification, {}},
      {K::PartPlacement, PartClass::Platter},
      {K::PartPlacement, PartClass::Spindle},
      {K::ScrewFastening, {}},
      {K::Verification, {}},
      {K::Verification, {}},
      {K::PartPlacement, PartClass::CaseCover},
      {K::ScrewFastening, {}},
      {K::PartPlacement, PartClass::LogiBoard},
      {K::ScrewFastening, {}},
      {K::Verification, {}},
      {K::Verification, {}},
      {K::Verification, {}},
      {K::Completion, {}},
  };
  for (std::size_t i = 0; i < expected.size(); ++i) {
    CAPTURE(i);
    CHECK(plan.stages[i].ordinal == static_cast<int>(i + 1));
    CHECK(plan.stages[i].kind == expected[i].first);
    if (expected[i].second) CHECK(plan.stages[i].part == expected[i].second);
  }
}

TEST_CASE("stage 2 places the actuator arm under an angle constraint") {
  const auto& s = builtin_hdd_plan().stage(2);
  CHECK(s.part == PartClass::ActuatorArm);
  CHECK(s.angle.has_value());
}

TEST_CASE("builtin plan validates clean and grasps match size classes") {
  const auto plan = builtin_hdd_plan();
  CHECK(validate_plan(plan).empty());
  for (const auto& s : plan.stages) {
    if (s.kind != StageKind::PartPlacement) continue;
    const bool small = *s.part == PartClass::Screw || *s.part == PartClass::ArmElectro;
    CHECK(s.grasp == (small ? Action::CatchSmall : Action::CatchBig));
    CHECK(size_class(*s.part) == *s.grasp);
  }
}

TEST_CASE("validate_plan reports violated invariants") {
  SUBCASE("screw stage without holes") {
    auto plan = builtin_hdd_plan();
    plan.stages[3].holes.clear();
    const auto d = validate_plan(plan);
    REQUIRE(d.size() == 1);
    CHECK(d[0].rule == PlanRule::MissingHoles);
    CHECK(d[0].stage_id == plan.stages[3].id);
  }
  SUBCASE("ordinals 1,2,4") {
    AssemblyPlan plan = builtin_hdd_plan();
    plan.stages.resize(3);
    plan.stages[2] = plan.stages[1];
    plan.stages[2].id = "another";
    plan.stages[2].ordinal = 4;
    CHECK(has_rule(validate_plan(plan), PlanRule::NonContiguousOrdinals));
  }
  SUBCASE("empty plan, duplicate ids, unknown hole") {
    CHECK(has_rule(validate_plan(AssemblyPlan{}), PlanRule::EmptyPlan));
    auto plan = builtin_hdd_plan();
    plan.stages[1].id = plan.stages[0].id;
    CHECK(has_rule(validate_plan(plan), PlanRule::DuplicateStageId));
    plan = builtin_hdd_plan();
    plan.stages[3].holes.push_back("ZZ9");
    CHECK(has_rule(validate_plan(plan), PlanRule::UnknownHole));
  }
  SUBCASE("every violation is listed, in stage order, stably") {
    auto plan = builtin_hdd_plan();
    plan.stages[0].target.reset();
    plan.stages[10].holes.clear();
    const auto a = validate_plan(plan);
    CHECK(a.size() == 2);
    CHECK(a[0].stage_id == plan.stages[0].id);
    CHECK(a[1].stage_id == plan.stages[10].id);
    CHECK(validate_plan(plan) == a);
  }
}

TEST_CASE("plan JSON round trip and strict parsing") {
  const auto plan = builtin_hdd_plan();
  CHECK(parse_plan(to_json(plan)) == plan);
  auto j = to_json(plan);
  j["stages"][0]["colour"] = "red";
  CHECK_THROWS_AS(parse_plan(j, true), PlanFormatError);
  CHECK(parse_plan(j, false) == plan);
  j = to_json(plan);
  j["stages"][0]["part"] = "Motor";
  CHECK_THROWS_AS(parse_plan(j), ValidationError);
}

TEST_CASE("shipped plan file matches the embedded plan") {
  CHECK(load_plan(std::string(SV_DATA_DIR) + "/hdd_plan.json") == builtin_hdd_plan());
}
