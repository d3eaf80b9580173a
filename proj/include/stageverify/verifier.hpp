#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "stageverify/core.hpp"
#include "stageverify/plan.hpp"
#include "stageverify/screw_link.hpp"

namespace sv {

enum class Phase : std::uint8_t {
  PartAssembly,
  PartAssemblyCorrection,
  PartVerification,
  ScrewAssembly,
  ScrewAssemblyCorrection,
  StageComplete,
  Final,
};

std::string_view to_string(Phase p);
Phase parse_phase(std::string_view s);

enum class ErrorKind : std::uint8_t {
  WrongPart,
  WrongPlacement,
  WrongAngle,
  ScrewNotTightened,
  NullAction,
  CameraOffline,
};

std::string_view to_string(ErrorKind k);
ErrorKind parse_error_kind(std::string_view s);

using Params = std::map<std::string, std::string>;

struct StageEntered {
  int ordinal = 0;
  bool operator==(const StageEntered&) const = default;
};
struct StageCompleted {
  int ordinal = 0;
  TimeMs duration_ms = 0;
  bool operator==(const StageCompleted&) const = default;
};
struct ErrorDetected {
  ErrorKind kind = ErrorKind::WrongPart;
  std::string detail;
  Params params;
  bool operator==(const ErrorDetected&) const = default;
};
struct Guidance {
  std::string text_key;
  int stage = 0;
  Params params;
  bool operator==(const Guidance&) const = default;
};
struct AssemblyComplete {
  TimeMs total_ms = 0;
  bool operator==(const AssemblyComplete&) const = default;
};

using VerifierEvent =
    std::variant<StageEntered, StageCompleted, ErrorDetected, Guidance, AssemblyComplete>;

std::string_view event_type(const VerifierEvent& e);
nlohmann::json to_json(const VerifierEvent& e);
VerifierEvent event_from_json(const nlohmann::json& j);

/// The error a correction phase is waiting to see resolved.
struct PendingError {
  ErrorKind kind = ErrorKind::WrongPart;
  TimeMs t_ms = 0;
  std::string hole;  // ScrewNotTightened only
  Guidance guidance;
  bool operator==(const PendingError&) const = default;
};

struct VerifierState {
  int stage_ordinal = 1;
  Phase phase = Phase::PartAssembly;
  int hold_counter = 0;
  std::optional<PendingError> pending_error;
  /// Holes of the current stage already fastened, in plan order.
  std::vector<std::string> holes_done;
  TimeMs stage_entered_ms = 0;
  TimeMs started_ms = 0;

  TimeMs last_evidence_ms = 0;
  TimeMs last_guidance_ms = 0;

  std::optional<PartClass> wrong_candidate;
  int wrong_counter = 0;
  int violation_counter = 0;

  bool tightening_active = false;
  std::optional<TimeMs> last_tightening_ms;
  std::optional<TimeMs> tightening_check_due;
  bool hole_done_since_tightening = false;

  bool camera_offline = false;

  bool operator==(const VerifierState&) const = default;
};

inline constexpr int kStateSchema = 1;

nlohmann::json to_json(const VerifierState& s);
/// Throws ValidationError on a malformed or wrong-version snapshot.
VerifierState state_from_json(const nlohmann::json& j);

struct FusedObservation {
  TimeMs tick_ms = 0;
  std::optional<DetectionFrame> detections;
  /// Filtered depth per part, only for parts with a filter output.
  std::map<PartClass, double> depth_mm;
  std::optional<ActionConfidence> acf;
  std::optional<ObjAngle> angle;
  /// Consolidated hole states; holes missing here are Unknown.
  std::map<std::string, HoleState> holes;
  /// Wrist positions (normalized image coordinates) of hands seen recently.
  std::vector<std::pair<double, double>> hand_wrists;

  struct Staleness {
    bool detections = true;
    bool acf = true;
    bool angle = true;
    bool holes = true;
    bool operator==(const Staleness&) const = default;
  } stale;

  HoleState hole(const std::string& id) const;
  bool operator==(const FusedObservation&) const = default;
};

class InconsistentState : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StepResult {
  VerifierState state;
  std::vector<VerifierEvent> events;
};

/// Initial state at stage 1 plus its StageEntered event.
StepResult start(const AssemblyPlan& plan, TimeMs t_ms);

StepResult step(const VerifierState& state, const FusedObservation& obs,
                const AssemblyPlan& plan, const ThresholdConfig& cfg);

Guidance guidance_text(const ErrorDetected& error, const StageSpec& stage);

}  // namespace sv
