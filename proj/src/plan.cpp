#include "stageverify/plan.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "builtin_plan_data.hpp"

namespace sv {

namespace {

constexpr std::array<std::string_view, 4> kKindNames = {
    "PartPlacement", "ScrewFastening", "Verification", "Completion"};

constexpr std::array<std::string_view, 15> kRuleNames = {
    "EmptyPlan",
    "EmptyStageId",
    "DuplicateStageId",
    "NonContiguousOrdinals",
    "MissingPart",
    "MissingGrasp",
    "MissingTarget",
    "MissingHoles",
    "MissingVerifyTargets",
    "UnexpectedAttributes",
    "InvalidGrasp",
    "RegionOutOfRange",
    "InvalidAngleConstraint",
    "InvalidDepth",
    "UnknownHole",
};

bool region_ok(const Region& r) {
  auto unit = [](double v) { return std::isfinite(v) && v >= 0 && v <= 1; };
  return unit(r.cx) && unit(r.cy) && unit(r.w) && unit(r.h) && r.w > 0 &&
         r.h > 0;
}

using json = nlohmann::json;

void check_keys(const json& obj, std::initializer_list<std::string_view> known,
                bool strict, std::string_view where) {
  if (!strict) return;
  for (const auto& [k, v] : obj.items()) {
    bool found = false;
    for (auto n : known) found = found || n == k;
    if (!found)
      throw PlanFormatError(fmt::format("{}: unknown field '{}'", where, k));
  }
}

double number(const json& obj, std::string_view key, std::string_view where) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_number())
    throw PlanFormatError(
        fmt::format("{}: field '{}' must be a number", where, key));
  return it->get<double>();
}

Region parse_region(const json& j, bool strict, std::string_view where) {
  if (!j.is_object())
    throw PlanFormatError(fmt::format("{}: region must be an object", where));
  check_keys(j, {"cx", "cy", "w", "h"}, strict, where);
  return {number(j, "cx", where), number(j, "cy", where), number(j, "w", where),
          number(j, "h", where)};
}

json region_json(const Region& r) {
  return {{"cx", r.cx}, {"cy", r.cy}, {"w", r.w}, {"h", r.h}};
}

std::vector<std::string> string_list(const json& j, std::string_view where) {
  if (!j.is_array())
    throw PlanFormatError(fmt::format("{}: expected an array", where));
  std::vector<std::string> out;
  for (const auto& e : j) {
    if (!e.is_string())
      throw PlanFormatError(fmt::format("{}: expected strings", where));
    out.push_back(e.get<std::string>());
  }
  return out;
}

StageSpec parse_stage(const json& j, bool strict, std::size_t index) {
  std::string where = fmt::format("stages[{}]", index);
  if (!j.is_object())
    throw PlanFormatError(where + ": stage must be an object");
  check_keys(j,
             {"id", "ordinal", "kind", "part", "grasp", "target",
              "expected_depth_mm", "angle", "holes", "verify_parts", "notes"},
             strict, where);
  StageSpec s;
  try {
    s.id = j.at("id").get<std::string>();
    s.ordinal = j.at("ordinal").get<int>();
    s.kind = parse_stage_kind(j.at("kind").get<std::string>());
    if (j.contains("part")) s.part = parse_part(j["part"].get<std::string>());
    if (j.contains("grasp"))
      s.grasp = parse_action(j["grasp"].get<std::string>());
    if (j.contains("target"))
      s.target = parse_region(j["target"], strict, where + ".target");
    if (j.contains("expected_depth_mm"))
      s.expected_depth_mm = number(j, "expected_depth_mm", where);
    if (j.contains("angle")) {
      const auto& a = j["angle"];
      check_keys(a, {"expected_deg", "tol_deg"}, strict, where + ".angle");
      s.angle = AngleConstraint{number(a, "expected_deg", where + ".angle"),
                                number(a, "tol_deg", where + ".angle")};
    }
    if (j.contains("holes")) s.holes = string_list(j["holes"], where + ".holes");
    if (j.contains("verify_parts"))
      for (const auto& p : string_list(j["verify_parts"], where))
        s.verify_parts.push_back(parse_part(p));
  } catch (const json::exception& e) {
    throw PlanFormatError(fmt::format("{}: {}", where, e.what()));
  } catch (const PlanFormatError&) {
    throw;
  } catch (const ValidationError& e) {
    throw PlanFormatError(fmt::format("{}: {}", where, e.what()));
  }
  return s;
}

}  // namespace

std::string_view to_string(StageKind k) {
  return kKindNames.at(static_cast<std::size_t>(k));
}

StageKind parse_stage_kind(std::string_view s) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i)
    if (kKindNames[i] == s) return static_cast<StageKind>(i);
  throw ValidationError(fmt::format("unknown stage kind '{}'", s));
}

std::string_view to_string(PlanRule r) {
  return kRuleNames.at(static_cast<std::size_t>(r));
}

const StageSpec& AssemblyPlan::stage(int ordinal) const {
  if (ordinal < 1 || static_cast<std::size_t>(ordinal) > stages.size())
    throw std::out_of_range(fmt::format("no stage with ordinal {}", ordinal));
  return stages[static_cast<std::size_t>(ordinal - 1)];
}

const StageSpec* AssemblyPlan::placement_of(PartClass p) const {
  for (const auto& s : stages)
    if (s.kind == StageKind::PartPlacement && s.part == p) return &s;
  return nullptr;
}

Action size_class(PartClass p) {
  return (p == PartClass::Screw || p == PartClass::ArmElectro)
             ? Action::CatchSmall
             : Action::CatchBig;
}

std::vector<PlanDiagnostic> validate_plan(const AssemblyPlan& plan) {
  std::vector<PlanDiagnostic> out;
  auto diag = [&](const std::string& id, PlanRule rule, std::string msg) {
    out.push_back({id, rule, std::move(msg)});
  };

  if (plan.stages.empty()) diag("", PlanRule::EmptyPlan, "plan has no stages");

  for (const auto& [id, r] : plan.holes)
    if (!region_ok(r))
      diag("", PlanRule::RegionOutOfRange,
           fmt::format("hole '{}' region outside [0,1] or empty", id));

  std::set<std::string> seen;
  bool ordinals_reported = false;
  for (std::size_t i = 0; i < plan.stages.size(); ++i) {
    const auto& s = plan.stages[i];
    if (s.id.empty()) diag(s.id, PlanRule::EmptyStageId, "stage id is empty");
    if (!seen.insert(s.id).second)
      diag(s.id, PlanRule::DuplicateStageId,
           fmt::format("stage id '{}' is not unique", s.id));
    if (!ordinals_reported && s.ordinal != static_cast<int>(i) + 1) {
      diag(s.id, PlanRule::NonContiguousOrdinals,
           fmt::format("expected ordinal {}, found {}", i + 1, s.ordinal));
      ordinals_reported = true;
    }

    switch (s.kind) {
      case StageKind::PartPlacement:
        if (!s.part) diag(s.id, PlanRule::MissingPart, "placement needs a part");
        if (!s.grasp)
          diag(s.id, PlanRule::MissingGrasp, "placement needs a grasp");
        if (!s.target)
          diag(s.id, PlanRule::MissingTarget, "placement needs a target");
        break;
      case StageKind::ScrewFastening:
        if (s.holes.empty())
          diag(s.id, PlanRule::MissingHoles, "screw stage lists no holes");
        break;
      case StageKind::Verification:
        if (s.holes.empty() && s.verify_parts.empty())
          diag(s.id, PlanRule::MissingVerifyTargets,
               "verification lists neither parts nor holes");
        break;
      case StageKind::Completion:
        if (s.part || s.grasp || s.target || s.expected_depth_mm || s.angle ||
            !s.holes.empty() || !s.verify_parts.empty())
          diag(s.id, PlanRule::UnexpectedAttributes,
               "completion stage carries attributes");
        break;
    }

    if (s.grasp && *s.grasp != Action::CatchBig &&
        *s.grasp != Action::CatchSmall)
      diag(s.id, PlanRule::InvalidGrasp, "grasp must be CatchBig or CatchSmall");
    if (s.target && !region_ok(*s.target))
      diag(s.id, PlanRule::RegionOutOfRange, "target outside [0,1] or empty");
    if (s.angle &&
        !(std::isfinite(s.angle->expected_deg) && s.angle->expected_deg >= 0 &&
          s.angle->expected_deg < 360 && std::isfinite(s.angle->tol_deg) &&
          s.angle->tol_deg > 0))
      diag(s.id, PlanRule::InvalidAngleConstraint,
           "angle needs expected_deg in [0,360) and tol_deg > 0");
    if (s.expected_depth_mm &&
        !(std::isfinite(*s.expected_depth_mm) && *s.expected_depth_mm > 0))
      diag(s.id, PlanRule::InvalidDepth, "expected depth must be positive");
    for (const auto& h : s.holes)
      if (!plan.holes.contains(h))
        diag(s.id, PlanRule::UnknownHole,
             fmt::format("hole '{}' is not in the hole map", h));
  }
  return out;
}

AssemblyPlan parse_plan(const json& j, bool strict) {
  if (!j.is_object()) throw PlanFormatError("plan must be a JSON object");
  check_keys(j, {"plan_id", "version", "stages", "holes", "notes"}, strict,
             "plan");
  AssemblyPlan plan;
  try {
    plan.plan_id = j.at("plan_id").get<std::string>();
    plan.version = j.at("version").get<int>();
    if (j.contains("notes")) plan.notes = j["notes"].get<std::string>();
  } catch (const json::exception& e) {
    throw PlanFormatError(fmt::format("plan: {}", e.what()));
  }
  if (plan.version != 1)
    throw PlanFormatError(
        fmt::format("unsupported plan version {}", plan.version));
  if (!j.contains("stages") || !j["stages"].is_array())
    throw PlanFormatError("plan: 'stages' must be an array");
  std::size_t i = 0;
  for (const auto& s : j["stages"]) plan.stages.push_back(parse_stage(s, strict, i++));
  if (j.contains("holes")) {
    if (!j["holes"].is_object())
      throw PlanFormatError("plan: 'holes' must be an object");
    for (const auto& [id, r] : j["holes"].items())
      plan.holes.emplace(id, parse_region(r, strict, "holes." + id));
  }
  return plan;
}

AssemblyPlan load_plan(const std::string& path, bool strict) {
  std::ifstream in(path);
  if (!in) throw PlanFormatError(fmt::format("cannot open plan '{}'", path));
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw PlanFormatError(fmt::format("{}: {}", path, e.what()));
  }
  return parse_plan(j, strict);
}

json to_json(const AssemblyPlan& plan) {
  json stages = json::array();
  for (const auto& s : plan.stages) {
    json js = {{"id", s.id},
               {"ordinal", s.ordinal},
               {"kind", std::string(to_string(s.kind))}};
    if (s.part) js["part"] = std::string(to_string(*s.part));
    if (s.grasp) js["grasp"] = std::string(to_string(*s.grasp));
    if (s.target) js["target"] = region_json(*s.target);
    if (s.expected_depth_mm) js["expected_depth_mm"] = *s.expected_depth_mm;
    if (s.angle)
      js["angle"] = {{"expected_deg", s.angle->expected_deg},
                     {"tol_deg", s.angle->tol_deg}};
    if (!s.holes.empty()) js["holes"] = s.holes;
    if (!s.verify_parts.empty()) {
      json vp = json::array();
      for (auto p : s.verify_parts) vp.push_back(std::string(to_string(p)));
      js["verify_parts"] = vp;
    }
    stages.push_back(std::move(js));
  }
  json holes = json::object();
  for (const auto& [id, r] : plan.holes) holes[id] = region_json(r);
  json j = {{"plan_id", plan.plan_id},
            {"version", plan.version},
            {"stages", stages},
            {"holes", holes}};
  if (!plan.notes.empty()) j["notes"] = plan.notes;
  return j;
}

std::string_view builtin_hdd_plan_text() { return kBuiltinPlanJson; }

AssemblyPlan builtin_hdd_plan() {
  return parse_plan(json::parse(builtin_hdd_plan_text()), true);
}

}  // namespace sv
