#include <doctest.h>

#include <cmath>
#include <random>

#include "stageverify/angle.hpp"
#include "stageverify/kernels.hpp"

using namespace sv;

static GrayGrid random_grid(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  GrayGrid g(w, h);
  for (auto& v : g.data) v = u(rng);
  return g;
}

TEST_CASE("cos_sin_deg is exact at quarter turns") {
  using kernels::cos_sin_deg;
  CHECK(cos_sin_deg(0) == std::array<double, 2>{1, 0});
  CHECK(cos_sin_deg(90) == std::array<double, 2>{0, 1});
  CHECK(cos_sin_deg(180) == std::array<double, 2>{-1, 0});
  CHECK(cos_sin_deg(-90) == std::array<double, 2>{0, -1});
  CHECK(cos_sin_deg(37)[0] == doctest::Approx(std::cos(37 * M_PI / 180)));
}

TEST_CASE("bilinear rotation: serial and parallel are bit-identical") {
  const auto g = random_grid(73, 51, 1);
  for (double deg : {0.0, 13.7, 90.0, 181.0, -45.0, 359.5})
    CHECK(kernels::rotate_bilinear_serial(g, deg) == kernels::rotate_bilinear_parallel(g, deg));
}

TEST_CASE("nearest rotation and IoU scan: serial and parallel are bit-identical") {
  const auto ref = binarize(fixtures::arm_image(64), 0.5);
  const auto obs = binarize(rotate_grid(fixtures::arm_image(64), 71), 0.5);
  for (double deg : {0.0, 33.0, 270.0})
    CHECK(kernels::rotate_nearest_serial(ref, deg) == kernels::rotate_nearest_parallel(ref, deg));
  const auto a = kernels::iou_scan_serial(ref, obs);
  const auto b = kernels::iou_scan_parallel(ref, obs);
  CHECK(a == b);
}

TEST_CASE("IoU scan at identity is 1 for a mask against itself") {
  const auto m = binarize(fixtures::l_shape_image(48), 0.5);
  CHECK(kernels::iou_scan_serial(m, m)[0] == 1.0);
}
