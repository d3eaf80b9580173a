#include "stageverify/angle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "stageverify/kernels.hpp"

namespace sv {

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;
// Anisotropy at which confidence saturates to 1.
constexpr double kAnisotropySaturation = 0.5;
// Relative third-moment magnitude treated as "no skew".
constexpr double kSkewEpsilon = 1e-9;

}  // namespace

MaskMoments mask_moments(const BinaryMask& m) {
  const std::size_t n = m.count();
  if (n < kMinMaskPixels)
    throw EmptyMask(fmt::format("mask has {} pixels, need at least {}", n,
                                kMinMaskPixels));

  MaskMoments mo;
  mo.mass = static_cast<double>(n);
  double sx = 0, sy = 0;
  for (int r = 0; r < m.height; ++r)
    for (int c = 0; c < m.width; ++c)
      if (m.at(r, c)) {
        sx += c;
        sy += -r;
      }
  mo.cx = sx / mo.mass;
  mo.cy = sy / mo.mass;

  for (int r = 0; r < m.height; ++r)
    for (int c = 0; c < m.width; ++c)
      if (m.at(r, c)) {
        const double dx = c - mo.cx;
        const double dy = -r - mo.cy;
        mo.mu20 += dx * dx;
        mo.mu02 += dy * dy;
        mo.mu11 += dx * dy;
      }

  const double diff = mo.mu20 - mo.mu02;
  if (std::fabs(diff) < kIsotropyEpsilon * mo.mass &&
      std::fabs(mo.mu11) < kIsotropyEpsilon * mo.mass)
    throw AmbiguousOrientation("mask second moments are isotropic");

  const double theta = 0.5 * std::atan2(2.0 * mo.mu11, diff);
  const double ux = std::cos(theta);
  const double uy = std::sin(theta);
  double m3 = 0;
  for (int r = 0; r < m.height; ++r)
    for (int c = 0; c < m.width; ++c)
      if (m.at(r, c)) {
        const double p = (c - mo.cx) * ux + (-r - mo.cy) * uy;
        m3 += p * p * p;
      }
  const double sigma = std::sqrt((mo.mu20 + mo.mu02) / mo.mass);
  const bool negative = m3 < -kSkewEpsilon * mo.mass * sigma * sigma * sigma;
  mo.skew_sign = negative ? -1 : 1;
  mo.axis_deg = canonicalize_angle(theta * kRadToDeg + (negative ? 180.0 : 0.0));
  mo.anisotropy =
      std::sqrt(diff * diff + 4.0 * mo.mu11 * mo.mu11) / (mo.mu20 + mo.mu02);
  return mo;
}

GrayGrid rotate_grid(const GrayGrid& img, double degrees) {
  if (!std::isfinite(degrees)) throw InvalidAngle("rotation must be finite");
  validate(img);
  return kernels::rotate_bilinear_parallel(img, degrees);
}

ReferenceDescriptor make_reference(const GrayGrid& img, double bin_threshold,
                                   std::string meta) {
  validate(img);
  ReferenceDescriptor ref;
  ref.mask = binarize(img, bin_threshold);
  const auto mo = mask_moments(ref.mask);
  ref.theta_ref_deg = mo.axis_deg;
  ref.skew_sign = mo.skew_sign;
  ref.bin_threshold = bin_threshold;
  ref.meta = std::move(meta);
  return ref;
}

ObjAngle estimate_angle(const GrayGrid& img, const ReferenceDescriptor& ref,
                        double bin_threshold) {
  validate(img);
  const auto mo = mask_moments(binarize(img, bin_threshold));
  ObjAngle out;
  out.degrees = canonicalize_angle(mo.axis_deg - ref.theta_ref_deg);
  out.conf = std::clamp(mo.anisotropy / kAnisotropySaturation, 0.0, 1.0);
  return out;
}

RotatedSample gen_rotated_sample(const GrayGrid& img, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(0.0, 360.0);
  const double x = canonicalize_angle(dist(rng));
  return {rotate_grid(img, x), x};
}

double angle_loss(double x, double y, LossMode mode) {
  if (!std::isfinite(x) || !std::isfinite(y))
    throw InvalidAngle("angle must be finite");
  return mode == LossMode::Literal ? std::fabs(x - y) : circ_diff(x, y);
}

namespace {

int argmax_smallest(const kernels::IouTable& t) {
  int best = 0;
  for (int d = 1; d < 360; ++d)
    if (t[static_cast<std::size_t>(d)] > t[static_cast<std::size_t>(best)])
      best = d;
  return best;
}

BinaryMask observed_mask(const GrayGrid& img, const ReferenceDescriptor& ref) {
  validate(img);
  if (ref.mask.count() == 0) throw EmptyMask("reference mask is empty");
  if (img.width != ref.mask.width || img.height != ref.mask.height)
    throw std::invalid_argument("observation and reference sizes differ");
  auto obs = binarize(img, ref.bin_threshold);
  if (obs.count() == 0) throw EmptyMask("observation mask is empty");
  return obs;
}

}  // namespace

int oracle_angle(const GrayGrid& img, const ReferenceDescriptor& ref) {
  return argmax_smallest(kernels::iou_scan_parallel(ref.mask, observed_mask(img, ref)));
}

int oracle_angle_serial(const GrayGrid& img, const ReferenceDescriptor& ref) {
  return argmax_smallest(kernels::iou_scan_serial(ref.mask, observed_mask(img, ref)));
}

nlohmann::json to_json(const ReferenceDescriptor& r) {
  return {{"theta_ref_deg", r.theta_ref_deg},
          {"skew_sign", r.skew_sign},
          {"bin_threshold", r.bin_threshold},
          {"width", r.mask.width},
          {"height", r.mask.height},
          {"mask", pack_mask_base64(r.mask)},
          {"meta", r.meta}};
}

ReferenceDescriptor reference_from_json(const nlohmann::json& j) {
  try {
    ReferenceDescriptor r;
    r.theta_ref_deg = j.at("theta_ref_deg").get<double>();
    r.skew_sign = j.at("skew_sign").get<int>();
    r.bin_threshold = j.value("bin_threshold", kDefaultBinThreshold);
    r.meta = j.value("meta", std::string{});
    r.mask = unpack_mask_base64(j.at("mask").get<std::string>(),
                                j.at("width").get<int>(),
                                j.at("height").get<int>());
    if (!(r.theta_ref_deg >= 0 && r.theta_ref_deg < 360))
      throw ValidationError("theta_ref_deg outside [0,360)");
    if (r.skew_sign != 1 && r.skew_sign != -1)
      throw ValidationError("skew_sign must be +1 or -1");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(fmt::format("reference descriptor: {}", e.what()));
  }
}

namespace fixtures {

namespace {

void fill_disk(GrayGrid& g, double cx, double cy, double radius) {
  for (int r = 0; r < g.height; ++r)
    for (int c = 0; c < g.width; ++c)
      if ((c - cx) * (c - cx) + (r - cy) * (r - cy) <= radius * radius)
        g.at(r, c) = 1.0;
}

void fill_rect(GrayGrid& g, int c0, int r0, int c1, int r1) {
  for (int r = std::max(0, r0); r <= std::min(g.height - 1, r1); ++r)
    for (int c = std::max(0, c0); c <= std::min(g.width - 1, c1); ++c)
      g.at(r, c) = 1.0;
}

}  // namespace

GrayGrid arm_image(int size) {
  GrayGrid g(size, size);
  const double s = size / 128.0;
  const auto px = [s](double v) { return static_cast<int>(std::lround(v * s)); };
  // long bar
  fill_rect(g, px(30), px(58), px(100), px(69));
  // pivot hub at the left end
  fill_disk(g, 34 * s, 63.5 * s, 14 * s);
  // head tab, offset above the bar at the right end
  fill_rect(g, px(92), px(50), px(104), px(58));
  return g;
}

GrayGrid disk_image(int size, double radius) {
  GrayGrid g(size, size);
  const double c = (size - 1) / 2.0;
  fill_disk(g, c, c, radius);
  return g;
}

GrayGrid bar_image(int size) {
  GrayGrid g(size, size);
  const int mid = size / 2;
  fill_rect(g, size / 4, mid - 3, size - 1 - size / 4, mid + 2);
  return g;
}

GrayGrid l_shape_image(int size) {
  GrayGrid g(size, size);
  const double s = size / 96.0;
  const auto px = [s](double v) { return static_cast<int>(std::lround(v * s)); };
  fill_rect(g, px(24), px(60), px(76), px(70));  // foot
  fill_rect(g, px(24), px(26), px(34), px(70));  // upright
  return g;
}

}  // namespace fixtures

}  // namespace sv
