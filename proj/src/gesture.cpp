#include "stageverify/gesture.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>

#include <fmt/format.h>

namespace sv {

double norm(const Vec3& v) { return std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z); }

double distance(const Vec3& a, const Vec3& b) {
  return norm({a.x - b.x, a.y - b.y, a.z - b.z});
}

HandFrame normalize_hand(const HandFrame& frame) {
  if (frame.points.empty()) throw DegenerateHand("hand has no keypoints");
  const Vec3 wrist = frame.points.front();
  HandFrame out{frame.t_ms, {}};
  out.points.reserve(frame.points.size());
  double span = 0;
  for (const auto& p : frame.points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
      throw ValidationError("hand keypoint is not finite");
    Vec3 d{p.x - wrist.x, p.y - wrist.y, p.z - wrist.z};
    span = std::max(span, norm(d));
    out.points.push_back(d);
  }
  if (!(span > 0)) throw DegenerateHand("all hand keypoints coincide");
  for (auto& p : out.points) {
    p.x /= span;
    p.y /= span;
    p.z /= span;
  }
  return out;
}

DoneResult done_heuristic(const HandFrame& f, const GestureConfig& cfg) {
  if (static_cast<int>(f.points.size()) != cfg.keypoints)
    throw FeatureLengthMismatch(fmt::format(
        "hand has {} keypoints, expected {}", f.points.size(), cfg.keypoints));
  double span = 0;
  for (const auto& p : f.points) span = std::max(span, norm(p));
  if (!(span > 0)) throw DegenerateHand("all hand keypoints coincide");

  const auto& pt = f.points;
  const Vec3& wrist = pt[0];
  const double pinch =
      distance(pt[static_cast<std::size_t>(cfg.thumb_tip)],
               pt[static_cast<std::size_t>(cfg.index_tip)]);
  bool extended = true;
  for (int tip : {cfg.middle_tip, cfg.ring_tip, cfg.pinky_tip})
    extended = extended &&
               distance(pt[static_cast<std::size_t>(tip)], wrist) > cfg.d_extend;

  DoneResult r;
  r.is_done = pinch < cfg.d_pinch && extended;
  r.conf = std::clamp(1.0 - pinch / cfg.d_pinch, 0.0, 1.0);
  return r;
}

GestureWindow::GestureWindow(GestureConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.window < 1) throw std::invalid_argument("window must be >= 1");
  for (int idx : cfg_.feature_points)
    if (idx < 0 || idx >= cfg_.keypoints)
      throw std::invalid_argument("feature keypoint index out of range");
}

bool GestureWindow::push(const HandFrame& f) {
  if (static_cast<int>(f.points.size()) != cfg_.keypoints)
    throw FeatureLengthMismatch(fmt::format(
        "hand has {} keypoints, expected {}", f.points.size(), cfg_.keypoints));
  Entry e{f.t_ms, {}};
  e.points.reserve(cfg_.feature_points.size());
  for (int idx : cfg_.feature_points)
    e.points.push_back(f.points[static_cast<std::size_t>(idx)]);
  frames_.push_back(std::move(e));
  if (static_cast<int>(frames_.size()) > cfg_.window) frames_.pop_front();
  return ready();
}

std::vector<double> GestureWindow::features() const {
  std::vector<double> out;
  out.reserve(frames_.size() * static_cast<std::size_t>(cfg_.features_per_frame()));
  if (frames_.empty()) return out;
  const TimeMs t0 = frames_.front().t_ms;
  const double span = static_cast<double>(frames_.back().t_ms - t0);
  for (const auto& e : frames_) {
    const double t = span > 0 ? static_cast<double>(e.t_ms - t0) / span : 0.0;
    for (const auto& p : e.points) {
      out.push_back(p.x);
      out.push_back(p.y);
      out.push_back(p.z);
      out.push_back(t);
    }
  }
  return out;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw FeatureLengthMismatch("feature vectors differ in length");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

ActionConfidence TemplateClassifier::classify(
    std::span<const double> features) const {
  if (templates_.empty()) throw NoTemplates("template set is empty");
  std::array<std::optional<double>, 4> best{};
  for (const auto& t : templates_) {
    const double s = cosine_similarity(features, t.features);
    auto& slot = best[static_cast<std::size_t>(t.label)];
    if (!slot || s > *slot) slot = s;
  }
  ActionConfidence out;
  for (auto a : kAllActions) {
    const auto& s = best[static_cast<std::size_t>(a)];
    out.set(a, s ? std::clamp((*s + 1.0) / 2.0, 0.0, 1.0) : 0.0);
  }
  return out;
}

ActionConfidence classify_window(const GestureWindow& window,
                                 const WindowClassifier& classifier,
                                 double done_hint) {
  if (!window.ready())
    throw WindowNotReady(fmt::format("window holds {} of {} frames",
                                     window.size(), window.config().window));
  const auto features = window.features();
  auto acf = classifier.classify(features);
  acf.done = std::max(acf.done, std::clamp(done_hint, 0.0, 1.0));
  return acf;
}

std::vector<GestureTemplate> parse_templates(const nlohmann::json& j,
                                             const GestureConfig& cfg) {
  if (!j.is_array()) throw ValidationError("template set must be an array");
  std::vector<GestureTemplate> out;
  for (const auto& e : j) {
    try {
      GestureTemplate t;
      t.label = parse_action(e.at("label").get<std::string>());
      t.features = e.at("features").get<std::vector<double>>();
      if (static_cast<int>(t.features.size()) != cfg.window_features())
        throw ValidationError(fmt::format("template has {} features, expected {}",
                                          t.features.size(),
                                          cfg.window_features()));
      for (double v : t.features)
        if (!std::isfinite(v)) throw ValidationError("template feature not finite");
      out.push_back(std::move(t));
    } catch (const nlohmann::json::exception& ex) {
      throw ValidationError(fmt::format("template: {}", ex.what()));
    }
  }
  return out;
}

std::vector<GestureTemplate> load_templates(const std::string& path,
                                            const GestureConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw ValidationError(fmt::format("cannot open '{}'", path));
  try {
    return parse_templates(nlohmann::json::parse(in), cfg);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(fmt::format("{}: {}", path, e.what()));
  }
}

nlohmann::json to_json(const std::vector<GestureTemplate>& templates) {
  auto arr = nlohmann::json::array();
  for (const auto& t : templates)
    arr.push_back({{"label", std::string(to_string(t.label))},
                   {"features", t.features}});
  return arr;
}

namespace synthetic {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

struct FingerSpec {
  double bx, by;      // base joint in the +y-pointing layout
  double dir_deg;     // in-plane direction
  double segment;     // segment length
};

// Thumb, index, middle, ring, pinky for a hand pointing along +y.
constexpr std::array<FingerSpec, 5> kLayout = {{
    {0.20, 0.10, 45, 0.15},
    {0.12, 0.45, 92, 0.16},
    {0.00, 0.48, 90, 0.17},
    {-0.11, 0.45, 88, 0.16},
    {-0.21, 0.38, 85, 0.13},
}};

struct Shape {
  double orientation_deg;               // in-plane rotation of the layout
  std::array<double, 5> curl;           // 0 straight .. 1 fully bent
  double palm_side;                     // +1 or -1: which way fingers bend
  bool pinch;                           // thumb tip meets index tip
  double twist_deg;                     // rotation about the hand axis
};

std::vector<Vec3> build(const Shape& s) {
  std::vector<Vec3> pts(21);
  for (std::size_t f = 0; f < 5; ++f) {
    const auto& spec = kLayout[f];
    Vec3 p{spec.bx, spec.by, 0};
    pts[1 + 4 * f] = p;
    const double dx = std::cos(spec.dir_deg * kDeg);
    const double dy = std::sin(spec.dir_deg * kDeg);
    for (int k = 1; k <= 3; ++k) {
      const double bend = k * s.curl[f] * 60.0 * kDeg;
      p.x += spec.segment * std::cos(bend) * dx;
      p.y += spec.segment * std::cos(bend) * dy;
      p.z += -s.palm_side * spec.segment * std::sin(bend);
      pts[1 + 4 * f + static_cast<std::size_t>(k)] = p;
    }
  }
  if (s.pinch) {
    Vec3 tip = pts[8];
    pts[4] = {tip.x + 0.02, tip.y - 0.01, tip.z};
    pts[3] = {(pts[2].x + pts[4].x) / 2, (pts[2].y + pts[4].y) / 2,
              (pts[2].z + pts[4].z) / 2};
  }
  // twist about the y axis (hand's long axis), then orient in plane
  const double ct = std::cos(s.twist_deg * kDeg), st = std::sin(s.twist_deg * kDeg);
  const double co = std::cos(s.orientation_deg * kDeg),
               so = std::sin(s.orientation_deg * kDeg);
  for (auto& p : pts) {
    const double x1 = ct * p.x + st * p.z;
    const double z1 = -st * p.x + ct * p.z;
    p = {co * x1 - so * p.y, so * x1 + co * p.y, z1};
  }
  return pts;
}

}  // namespace

std::vector<Vec3> hand_pose(Action a, double phase) {
  const double w = std::sin(2.0 * std::numbers::pi * phase);
  switch (a) {
    case Action::CatchBig:
      return build({-90, {0.2, 0.35 + 0.08 * w, 0.35 + 0.08 * w, 0.35 + 0.08 * w,
                          0.35 + 0.08 * w},
                    1, false, 0});
    case Action::CatchSmall:
      return build({0, {0.3, 0.5, 0.95, 0.95, 0.95}, 1, true, 5 * w});
    case Action::Tightening:
      return build({90, {0.4, 0.6, 0.6, 0.6, 0.6}, -1, false, 30 * w});
    case Action::Done:
      return build({180, {0.2, 0.6, 0.02, 0.02, 0.02}, 1, true, 4 * w});
  }
  return {};
}

HandFrame render(const std::vector<Vec3>& pose, double wrist_x, double wrist_y,
                 double scale, TimeMs t_ms) {
  HandFrame f{t_ms, {}};
  f.points.reserve(pose.size());
  for (const auto& p : pose)
    // image y grows downward
    f.points.push_back({wrist_x + scale * p.x, wrist_y - scale * p.y, scale * p.z});
  return f;
}

std::vector<GestureTemplate> reference_templates(const GestureConfig& cfg) {
  constexpr int kPhaseShifts = 6;
  std::vector<GestureTemplate> out;
  for (auto a : kAllActions) {
    for (int shift = 0; shift < kPhaseShifts; ++shift) {
      GestureWindow win(cfg);
      for (int i = 0; i < cfg.window; ++i) {
        const double phase =
            static_cast<double>(i) / cfg.window +
            static_cast<double>(shift) / kPhaseShifts;
        auto raw = render(hand_pose(a, phase), 0.5, 0.5, 0.2,
                          i * kFramePeriodMs);
        win.push(normalize_hand(raw));
      }
      out.push_back({a, win.features()});
    }
  }
  return out;
}

}  // namespace synthetic

}  // namespace sv
