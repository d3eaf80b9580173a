#include "stageverify/kernels.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "stageverify/core.hpp"

namespace sv::kernels {

std::array<double, 2> cos_sin_deg(double degrees) {
  const double d = canonicalize_angle(degrees);
  if (d == 0.0) return {1.0, 0.0};
  if (d == 90.0) return {0.0, 1.0};
  if (d == 180.0) return {-1.0, 0.0};
  if (d == 270.0) return {0.0, -1.0};
  const double r = d * std::numbers::pi / 180.0;
  return {std::cos(r), std::sin(r)};
}

namespace {

// Maps output pixel (row, col) to its source coordinates. Rotation is
// counterclockwise in a y-up frame centred on the grid.
struct InverseMap {
  double c, s, cx, cy;

  InverseMap(int width, int height, double degrees) {
    auto cs = cos_sin_deg(degrees);
    c = cs[0];
    s = cs[1];
    cx = (width - 1) / 2.0;
    cy = (height - 1) / 2.0;
  }

  void source(int row, int col, double& src_row, double& src_col) const {
    const double x = col - cx;
    const double y = cy - row;
    const double xi = c * x + s * y;
    const double yi = -s * x + c * y;
    src_col = xi + cx;
    src_row = cy - yi;
  }
};

inline double pixel_or_zero(const GrayGrid& img, long r, long c) {
  if (r < 0 || c < 0 || r >= img.height || c >= img.width) return 0.0;
  return img.data[static_cast<std::size_t>(r) * img.width +
                  static_cast<std::size_t>(c)];
}

inline double bilinear(const GrayGrid& img, double r, double c) {
  const double rf = std::floor(r);
  const double cf = std::floor(c);
  const long r0 = static_cast<long>(rf);
  const long c0 = static_cast<long>(cf);
  const double fr = r - rf;
  const double fc = c - cf;
  return (1 - fr) * ((1 - fc) * pixel_or_zero(img, r0, c0) +
                     fc * pixel_or_zero(img, r0, c0 + 1)) +
         fr * ((1 - fc) * pixel_or_zero(img, r0 + 1, c0) +
               fc * pixel_or_zero(img, r0 + 1, c0 + 1));
}

inline void rotate_row(const GrayGrid& img, const InverseMap& map, int row,
                       GrayGrid& out) {
  for (int col = 0; col < img.width; ++col) {
    double sr, sc;
    map.source(row, col, sr, sc);
    out.at(row, col) = bilinear(img, sr, sc);
  }
}

inline std::uint8_t nearest(const BinaryMask& m, double r, double c) {
  const long ri = std::lround(r);
  const long ci = std::lround(c);
  if (ri < 0 || ci < 0 || ri >= m.height || ci >= m.width) return 0;
  return m.bits[static_cast<std::size_t>(ri) * m.width +
                static_cast<std::size_t>(ci)];
}

inline void rotate_mask_row(const BinaryMask& m, const InverseMap& map, int row,
                            BinaryMask& out) {
  for (int col = 0; col < m.width; ++col) {
    double sr, sc;
    map.source(row, col, sr, sc);
    out.bits[static_cast<std::size_t>(row) * m.width + col] =
        nearest(m, sr, sc);
  }
}

double iou_at(const BinaryMask& ref, const BinaryMask& obs, int degrees) {
  const InverseMap map(ref.width, ref.height, degrees);
  std::size_t inter = 0, uni = 0;
  for (int row = 0; row < ref.height; ++row) {
    for (int col = 0; col < ref.width; ++col) {
      double sr, sc;
      map.source(row, col, sr, sc);
      const bool a = nearest(ref, sr, sc) != 0;
      const bool b = obs.at(row, col);
      inter += (a && b);
      uni += (a || b);
    }
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

void require_same_shape(const BinaryMask& a, const BinaryMask& b) {
  if (a.width != b.width || a.height != b.height)
    throw std::invalid_argument("masks must have equal dimensions");
}

}  // namespace

GrayGrid rotate_bilinear_serial(const GrayGrid& img, double degrees) {
  const InverseMap map(img.width, img.height, degrees);
  GrayGrid out(img.width, img.height);
  for (int row = 0; row < img.height; ++row) rotate_row(img, map, row, out);
  return out;
}

GrayGrid rotate_bilinear_parallel(const GrayGrid& img, double degrees) {
  const InverseMap map(img.width, img.height, degrees);
  GrayGrid out(img.width, img.height);
#pragma omp parallel for schedule(static)
  for (int row = 0; row < img.height; ++row) rotate_row(img, map, row, out);
  return out;
}

BinaryMask rotate_nearest_serial(const BinaryMask& m, double degrees) {
  const InverseMap map(m.width, m.height, degrees);
  BinaryMask out{m.width, m.height, std::vector<std::uint8_t>(m.bits.size())};
  for (int row = 0; row < m.height; ++row) rotate_mask_row(m, map, row, out);
  return out;
}

BinaryMask rotate_nearest_parallel(const BinaryMask& m, double degrees) {
  const InverseMap map(m.width, m.height, degrees);
  BinaryMask out{m.width, m.height, std::vector<std::uint8_t>(m.bits.size())};
#pragma omp parallel for schedule(static)
  for (int row = 0; row < m.height; ++row) rotate_mask_row(m, map, row, out);
  return out;
}

IouTable iou_scan_serial(const BinaryMask& ref, const BinaryMask& obs) {
  require_same_shape(ref, obs);
  IouTable t{};
  for (int d = 0; d < 360; ++d) t[static_cast<std::size_t>(d)] = iou_at(ref, obs, d);
  return t;
}

IouTable iou_scan_parallel(const BinaryMask& ref, const BinaryMask& obs) {
  require_same_shape(ref, obs);
  IouTable t{};
#pragma omp parallel for schedule(dynamic, 8)
  for (int d = 0; d < 360; ++d) t[static_cast<std::size_t>(d)] = iou_at(ref, obs, d);
  return t;
}

}  // namespace sv::kernels
