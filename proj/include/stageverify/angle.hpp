#pragma once

#include <random>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "stageverify/core.hpp"
#include "stageverify/grid.hpp"

namespace sv {

class EmptyMask : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class AmbiguousOrientation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kDefaultBinThreshold = 0.5;
inline constexpr std::size_t kMinMaskPixels = 16;
/// Isotropy bound on |mu20 - mu02| and |mu11|, as a fraction of mask mass.
inline constexpr double kIsotropyEpsilon = 1e-3;

/// Second- and third-order shape statistics of a binary mask in a y-up frame.
struct MaskMoments {
  double mass = 0;
  double cx = 0, cy = 0;
  double mu20 = 0, mu02 = 0, mu11 = 0;
  /// Principal axis, degrees in [0,360) after skew disambiguation.
  double axis_deg = 0;
  /// Sign of the third moment along the undisambiguated axis (+1 or -1).
  int skew_sign = 1;
  /// Elongation in [0,1]; 0 for isotropic shapes.
  double anisotropy = 0;
};

/// Throws EmptyMask below kMinMaskPixels and AmbiguousOrientation for
/// isotropic masks.
MaskMoments mask_moments(const BinaryMask& m);

struct ReferenceDescriptor {
  double theta_ref_deg = 0;
  int skew_sign = 1;
  double bin_threshold = kDefaultBinThreshold;
  BinaryMask mask;
  std::string meta;

  bool operator==(const ReferenceDescriptor&) const = default;
};

nlohmann::json to_json(const ReferenceDescriptor& r);
ReferenceDescriptor reference_from_json(const nlohmann::json& j);

struct RotatedSample {
  GrayGrid image;
  double label_deg = 0;
};

enum class LossMode { Literal, Circular };

/// Counterclockwise rotation about the grid center, bilinear, border 0.
GrayGrid rotate_grid(const GrayGrid& img, double degrees);

ReferenceDescriptor make_reference(const GrayGrid& img,
                                   double bin_threshold = kDefaultBinThreshold,
                                   std::string meta = {});

/// Orientation of `img` relative to the reference pose. t_ms is left at 0.
ObjAngle estimate_angle(const GrayGrid& img, const ReferenceDescriptor& ref,
                        double bin_threshold = kDefaultBinThreshold);

/// Draws x uniformly from [0,360) and rotates `img` by it.
RotatedSample gen_rotated_sample(const GrayGrid& img, std::mt19937_64& rng);

double angle_loss(double x, double y, LossMode mode);

/// Brute-force reference: integer angle maximising IoU between the rotated
/// reference mask and the binarized observation. Ties go to the smaller angle.
int oracle_angle(const GrayGrid& img, const ReferenceDescriptor& ref);
int oracle_angle_serial(const GrayGrid& img, const ReferenceDescriptor& ref);

/// Pluggable orientation regressor. A learned model trained on
/// gen_rotated_sample output would implement the same interface.
class AngleEstimator {
 public:
  virtual ~AngleEstimator() = default;
  virtual ObjAngle estimate(const GrayGrid& crop) const = 0;
};

class MomentAngleEstimator final : public AngleEstimator {
 public:
  explicit MomentAngleEstimator(ReferenceDescriptor ref)
      : ref_(std::move(ref)) {}
  ObjAngle estimate(const GrayGrid& crop) const override {
    return estimate_angle(crop, ref_, ref_.bin_threshold);
  }
  const ReferenceDescriptor& reference() const { return ref_; }

 private:
  ReferenceDescriptor ref_;
};

namespace fixtures {
/// Actuator-arm silhouette: a bar with a pivot hub at one end and a head
/// tab at the other; asymmetric along its long axis.
GrayGrid arm_image(int size = 128);
/// Filled disk centred on the grid.
GrayGrid disk_image(int size = 64, double radius = 20);
/// Axis-aligned horizontal bar centred on the grid.
GrayGrid bar_image(int size = 64);
/// L-shaped mask.
GrayGrid l_shape_image(int size = 96);
}  // namespace fixtures

}  // namespace sv
