#pragma once

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "stageverify/core.hpp"
#include "stageverify/depth_filter.hpp"
#include "stageverify/gesture.hpp"
#include "stageverify/plan.hpp"
#include "stageverify/replay.hpp"
#include "stageverify/screw_link.hpp"
#include "stageverify/verifier.hpp"

namespace sv {

inline constexpr int kDirectAcfSource = -1;

/// Recent inputs in arrival order. Depth filtering happens on ingest, so
/// `depth` already holds each part's filtered value.
struct FusionBuffers {
  std::deque<DetectionFrame> detections;
  /// Keyed by source: hand index, or kDirectAcfSource for acf records.
  std::map<int, std::deque<ActionConfidence>> acf;
  std::deque<ObjAngle> angles;
  std::map<int, HandRecord> hands;  // latest frame per hand
  HoleAggregate holes;
  std::map<PartClass, double> depth;
};

/// Snaps `now_ms` down to the tick grid and takes the newest record of each
/// kind that is not in the future and not older than its TTL.
FusedObservation fuse_tick(const FusionBuffers& buffers, TimeMs now_ms,
                           const ThresholdConfig& cfg);

struct LoggedEvent {
  std::uint64_t event_id = 0;
  TimeMs t_ms = 0;
  VerifierEvent event;
  bool operator==(const LoggedEvent&) const = default;
};

nlohmann::json to_json(const LoggedEvent& e);

enum class Outcome : std::uint8_t { Complete, Aborted, InProgress };

std::string_view to_string(Outcome o);

struct ReportError {
  ErrorKind kind = ErrorKind::WrongPart;
  TimeMs t_ms = 0;
  std::string guidance_key;
  bool operator==(const ReportError&) const = default;
};

struct StageRecord {
  int ordinal = 0;
  std::string id;
  bool completed = false;
  TimeMs duration_ms = 0;
  int attempts = 0;
  std::vector<ReportError> errors;
  bool operator==(const StageRecord&) const = default;
};

struct Acknowledgment {
  std::uint64_t event_id = 0;
  TimeMs t_ms = 0;
  bool operator==(const Acknowledgment&) const = default;
};

struct OperationReport {
  std::string session_id;
  std::string plan_id;
  TimeMs started_ms = 0;
  TimeMs ended_ms = 0;
  std::vector<StageRecord> stages;
  int stages_completed = 0;
  int error_count = 0;
  TimeMs total_ms = 0;
  Outcome outcome = Outcome::InProgress;
  std::vector<Acknowledgment> acknowledgments;
  bool operator==(const OperationReport&) const = default;
};

/// Folds an event log into a report; every ErrorDetected lands in the
/// record of the stage that was current when it was raised.
OperationReport build_report(const AssemblyPlan& plan, const std::vector<LoggedEvent>& log,
                             std::string session_id, TimeMs started_ms, TimeMs ended_ms,
                             Outcome outcome,
                             const std::vector<Acknowledgment>& acks = {});

nlohmann::json to_json(const OperationReport& r);
OperationReport report_from_json(const nlohmann::json& j);
/// Pretty-printed JSON with sorted keys and a trailing newline.
std::string report_bytes(const OperationReport& r);
std::string render_markdown(const OperationReport& r);

/// Owns every piece of mutable session state: buffers, gesture windows,
/// depth filters, hole aggregate and the verifier.
class Orchestrator {
 public:
  Orchestrator(AssemblyPlan plan, ThresholdConfig cfg,
               std::shared_ptr<const WindowClassifier> classifier,
               GestureConfig gesture = {});

  void begin(TimeMs t_ms);
  bool started() const { return started_; }

  void ingest(const DetectionFrame& f);
  /// Throws FeatureLengthMismatch on a wrong keypoint count.
  void ingest(const HandRecord& h);
  void ingest(const ObjAngle& a);
  void ingest(const link::Holes& h);
  void ingest(const ActionConfidence& a);
  void ingest(const ReplayRecord& r);

  /// Fuses at `now_ms` and, unless paused or finished, steps the verifier.
  /// Returns the events logged by this tick.
  std::vector<LoggedEvent> tick(TimeMs now_ms);

  void set_paused(bool paused) { paused_ = paused; }
  bool paused() const { return paused_; }
  bool finished() const { return state_.phase == Phase::Final; }

  const VerifierState& state() const { return state_; }
  const std::vector<LoggedEvent>& log() const { return log_; }
  const FusedObservation& last_observation() const { return last_obs_; }
  const AssemblyPlan& plan() const { return plan_; }
  const ThresholdConfig& config() const { return cfg_; }
  TimeMs started_ms() const { return started_ms_; }
  TimeMs last_tick_ms() const { return last_tick_; }

 private:
  void append(TimeMs t, std::vector<VerifierEvent> events, std::vector<LoggedEvent>& out);
  void prune(TimeMs now);

  AssemblyPlan plan_;
  ThresholdConfig cfg_;
  std::shared_ptr<const WindowClassifier> classifier_;
  GestureConfig gesture_cfg_;

  FusionBuffers buffers_;
  std::map<PartClass, DepthTrack> depth_tracks_;
  std::map<int, GestureWindow> windows_;
  std::map<int, TimeMs> last_hand_t_;
  std::vector<HoleReport> pending_holes_;

  VerifierState state_;
  FusedObservation last_obs_;
  std::vector<LoggedEvent> log_;
  bool started_ = false;
  bool paused_ = false;
  TimeMs started_ms_ = 0;
  TimeMs last_tick_ = -1;
  TimeMs paused_total_ = 0;
};

/// The bundled nearest-template classifier over the scripted gestures.
std::shared_ptr<const WindowClassifier> default_classifier();

struct ReplayRun {
  OperationReport report;
  std::vector<LoggedEvent> log;
};

/// Deterministic: the fusion clock comes from the replay (meta tick_ms) and
/// the session id is the SHA-256 of the replay bytes. `on_tick` sees the
/// orchestrator after every tick.
ReplayRun run_replay(std::string_view replay_bytes, const AssemblyPlan& plan,
                     const ThresholdConfig& cfg,
                     std::shared_ptr<const WindowClassifier> classifier = nullptr,
                     const std::function<void(const Orchestrator&)>& on_tick = {});

std::string sha256_hex(std::string_view bytes);

}  // namespace sv
