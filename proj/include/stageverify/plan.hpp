#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "stageverify/core.hpp"

namespace sv {

using Region = Rect;

enum class StageKind : std::uint8_t {
  PartPlacement,
  ScrewFastening,
  Verification,
  Completion
};

std::string_view to_string(StageKind k);
StageKind parse_stage_kind(std::string_view s);

struct AngleConstraint {
  double expected_deg = 0;
  double tol_deg = 10;
  bool operator==(const AngleConstraint&) const = default;
};

struct StageSpec {
  std::string id;
  int ordinal = 0;
  StageKind kind = StageKind::PartPlacement;
  std::optional<PartClass> part;
  /// Only CatchBig or CatchSmall.
  std::optional<Action> grasp;
  std::optional<Region> target;
  std::optional<double> expected_depth_mm;
  std::optional<AngleConstraint> angle;
  std::vector<std::string> holes;
  std::vector<PartClass> verify_parts;

  bool operator==(const StageSpec&) const = default;
};

struct AssemblyPlan {
  std::string plan_id;
  int version = 1;
  std::vector<StageSpec> stages;
  /// hole id -> region in the close-range camera frame
  std::map<std::string, Region> holes;
  std::string notes;

  std::size_t size() const { return stages.size(); }
  /// 1-based; throws std::out_of_range.
  const StageSpec& stage(int ordinal) const;
  /// The PartPlacement stage that installs `p`, if any.
  const StageSpec* placement_of(PartClass p) const;

  bool operator==(const AssemblyPlan&) const = default;
};

enum class PlanRule : std::uint8_t {
  EmptyPlan,
  EmptyStageId,
  DuplicateStageId,
  NonContiguousOrdinals,
  MissingPart,
  MissingGrasp,
  MissingTarget,
  MissingHoles,
  MissingVerifyTargets,
  UnexpectedAttributes,
  InvalidGrasp,
  RegionOutOfRange,
  InvalidAngleConstraint,
  InvalidDepth,
  UnknownHole,
};

std::string_view to_string(PlanRule r);

struct PlanDiagnostic {
  std::string stage_id;
  PlanRule rule;
  std::string message;

  bool operator==(const PlanDiagnostic&) const = default;
};

/// Every violated invariant, in stage order. Empty means the plan is valid.
std::vector<PlanDiagnostic> validate_plan(const AssemblyPlan& plan);

/// Thrown for structurally malformed plan documents (wrong types, unknown
/// fields in strict mode). Invariant violations are reported by validate_plan.
class PlanFormatError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

AssemblyPlan parse_plan(const nlohmann::json& j, bool strict = true);
AssemblyPlan load_plan(const std::string& path, bool strict = true);
nlohmann::json to_json(const AssemblyPlan& plan);

/// The 21-stage hard-drive plan shipped in data/hdd_plan.json.
AssemblyPlan builtin_hdd_plan();
/// The same plan as raw JSON text.
std::string_view builtin_hdd_plan_text();

/// CatchSmall for screws and the electro component, CatchBig otherwise.
Action size_class(PartClass p);

}  // namespace sv
