#pragma once

#include <deque>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "stageverify/core.hpp"

namespace sv {

struct Vec3 {
  double x = 0, y = 0, z = 0;
  bool operator==(const Vec3&) const = default;
};

double norm(const Vec3& v);
double distance(const Vec3& a, const Vec3& b);

/// One hand's keypoints for one camera frame, wrist first.
struct HandFrame {
  TimeMs t_ms = 0;
  std::vector<Vec3> points;
  bool operator==(const HandFrame&) const = default;
};

class DegenerateHand : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class FeatureLengthMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class WindowNotReady : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class NoTemplates : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GestureConfig {
  int keypoints = 21;
  int window = 30;
  /// Keypoints fed to the window: wrist, five fingertips, four knuckle bases.
  std::vector<int> feature_points = {0, 4, 8, 12, 16, 20, 5, 9, 13, 17};
  int thumb_tip = 4;
  int index_tip = 8;
  int middle_tip = 12;
  int ring_tip = 16;
  int pinky_tip = 20;
  double d_pinch = 0.15;
  double d_extend = 0.6;

  int features_per_frame() const {
    return static_cast<int>(feature_points.size()) * 4;
  }
  int window_features() const { return window * features_per_frame(); }
};

/// Wrist to origin, uniform scale so the farthest keypoint sits at distance 1.
HandFrame normalize_hand(const HandFrame& frame);

struct DoneResult {
  bool is_done = false;
  double conf = 0;
};

/// Thumb/index pinch with the remaining three fingers extended.
DoneResult done_heuristic(const HandFrame& normalized,
                          const GestureConfig& cfg = {});

/// The last `cfg.window` normalized frames of one hand.
class GestureWindow {
 public:
  explicit GestureWindow(GestureConfig cfg = {});

  /// Returns true when the window holds a full sequence.
  bool push(const HandFrame& normalized);
  bool ready() const { return static_cast<int>(frames_.size()) == cfg_.window; }
  std::size_t size() const { return frames_.size(); }
  void reset() { frames_.clear(); }

  /// Flattened window; t is rebased to the first frame and scaled to [0,1].
  std::vector<double> features() const;
  const GestureConfig& config() const { return cfg_; }

 private:
  struct Entry {
    TimeMs t_ms;
    std::vector<Vec3> points;
  };
  GestureConfig cfg_;
  std::deque<Entry> frames_;
};

struct GestureTemplate {
  Action label = Action::CatchBig;
  std::vector<double> features;
};

class WindowClassifier {
 public:
  virtual ~WindowClassifier() = default;
  /// Confidences in [0,1]; t_ms is left at 0.
  virtual ActionConfidence classify(std::span<const double> features) const = 0;
};

/// Nearest-template cosine similarity per label, mapped to [0,1] by (s+1)/2.
class TemplateClassifier final : public WindowClassifier {
 public:
  explicit TemplateClassifier(std::vector<GestureTemplate> templates)
      : templates_(std::move(templates)) {}
  ActionConfidence classify(std::span<const double> features) const override;
  const std::vector<GestureTemplate>& templates() const { return templates_; }

 private:
  std::vector<GestureTemplate> templates_;
};

/// Throws WindowNotReady. The done component is raised to `done_hint` when
/// the heuristic fired on the most recent frame.
ActionConfidence classify_window(const GestureWindow& window,
                                 const WindowClassifier& classifier,
                                 double done_hint = 0.0);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

std::vector<GestureTemplate> parse_templates(const nlohmann::json& j,
                                             const GestureConfig& cfg = {});
std::vector<GestureTemplate> load_templates(const std::string& path,
                                            const GestureConfig& cfg = {});
nlohmann::json to_json(const std::vector<GestureTemplate>& templates);

/// Scripted hand motions for the four gestures, used by the scenario
/// simulator and to build the bundled template set.
namespace synthetic {

/// 21 keypoints in hand space (wrist at origin) at cycle phase [0,1).
std::vector<Vec3> hand_pose(Action a, double phase);

/// Places a hand-space pose at `wrist` in normalized image coordinates.
HandFrame render(const std::vector<Vec3>& pose, double wrist_x, double wrist_y,
                 double scale, TimeMs t_ms);

/// Frame period of the scripted motions.
inline constexpr TimeMs kFramePeriodMs = 33;

/// Several phase-shifted templates per gesture.
std::vector<GestureTemplate> reference_templates(const GestureConfig& cfg = {});

}  // namespace synthetic

}  // namespace sv
