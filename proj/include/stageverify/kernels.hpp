#pragma once

#include <array>

#include "stageverify/grid.hpp"

// Data-parallel image kernels. Every kernel has a serial reference and an
// OpenMP variant; both perform the same arithmetic per pixel, so their
// outputs are bit-identical.
namespace sv::kernels {

/// cos/sin of an angle in degrees, exact at multiples of 90.
std::array<double, 2> cos_sin_deg(double degrees);

/// Counterclockwise rotation about the grid center, bilinear, border fill 0.
GrayGrid rotate_bilinear_serial(const GrayGrid& img, double degrees);
GrayGrid rotate_bilinear_parallel(const GrayGrid& img, double degrees);

/// Same geometry with nearest-neighbour sampling.
BinaryMask rotate_nearest_serial(const BinaryMask& m, double degrees);
BinaryMask rotate_nearest_parallel(const BinaryMask& m, double degrees);

/// IoU between `ref` rotated by each integer angle 0..359 and `obs`.
using IouTable = std::array<double, 360>;
IouTable iou_scan_serial(const BinaryMask& ref, const BinaryMask& obs);
IouTable iou_scan_parallel(const BinaryMask& ref, const BinaryMask& obs);

}  // namespace sv::kernels
