#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "stageverify/depth_filter.hpp"

using namespace sv;

// Sort-based lower median of the last n samples.
static double median_oracle(const std::vector<double>& xs, std::size_t end, int n) {
  const std::size_t begin = end > static_cast<std::size_t>(n) ? end - n : 0;
  std::vector<double> w(xs.begin() + static_cast<long>(begin), xs.begin() + static_cast<long>(end));
  std::sort(w.begin(), w.end());
  return w[(w.size() - 1) / 2];
}

TEST_CASE("constant input is a fixed point") {
  DepthTrack t(5, 1.0);
  for (int i = 0; i < 5; ++i) CHECK(t.push(100) == 100.0);
}

TEST_CASE("a single spike does not move the output") {
  DepthTrack t(5, 1.0);
  std::optional<double> out;
  for (double x : {100.0, 100.0, 600.0, 100.0, 100.0}) out = t.push(x);
  CHECK(out == 100.0);

  for (double spike : {600.0, -400.0}) {
    DepthTrack s(5, 1.0);
    for (int i = 0; i < 20; ++i) {
      const auto o = s.push(i == 10 ? 100.0 + spike : 100.0);
      CHECK(o == 100.0);
    }
  }
}

TEST_CASE("invalid samples before any data give nothing") {
  DepthTrack t;
  CHECK_FALSE(t.push(-1).has_value());
  CHECK_FALSE(t.push(0).has_value());
  CHECK_FALSE(t.push(std::numeric_limits<double>::quiet_NaN()).has_value());
  CHECK_FALSE(t.value().has_value());
  CHECK(t.window().empty());
}

TEST_CASE("lower median examples") {
  CHECK(lower_median({3}) == 3);
  CHECK(lower_median({4, 1}) == 1);
  CHECK(lower_median({5, 1, 3}) == 3);
  CHECK(lower_median({1, 2, 3, 4}) == 2);
}

TEST_CASE("alpha=1 equals the sort-based median on random windows") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> val(1, 2000);
  std::uniform_int_distribution<int> win(1, 9);
  for (int trial = 0; trial < 10000; ++trial) {
    const int n = win(rng);
    DepthTrack t(n, 1.0);
    std::vector<double> xs;
    const int len = n + 3;
    std::optional<double> out;
    for (int i = 0; i < len; ++i) {
      xs.push_back(val(rng));
      out = t.push(xs.back());
    }
    REQUIRE(out.has_value());
    CHECK(*out == median_oracle(xs, xs.size(), n));
  }
}

TEST_CASE("invalid samples are ignored wherever they appear") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> val(100, 900);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> valid(12);
    for (auto& v : valid) v = val(rng);
    DepthTrack clean(5, 0.3), noisy(5, 0.3);
    for (double v : valid) {
      clean.push(v);
      if (rng() % 2) noisy.push(-5);
      noisy.push(v);
      if (rng() % 3 == 0) noisy.push(std::numeric_limits<double>::infinity());
    }
    CHECK(clean.value() == noisy.value());
    CHECK(clean.window() == noisy.window());
  }
}

TEST_CASE("smoothed output stays within the window and the previous output") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> val(300, 900);
  DepthTrack t(5, 0.3);
  std::optional<double> prev;
  for (int i = 0; i < 5000; ++i) {
    const auto out = t.push(val(rng));
    REQUIRE(out.has_value());
    double lo = *std::min_element(t.window().begin(), t.window().end());
    double hi = *std::max_element(t.window().begin(), t.window().end());
    if (prev) {
      lo = std::min(lo, *prev);
      hi = std::max(hi, *prev);
    }
    CHECK(*out >= lo);
    CHECK(*out <= hi);
    CHECK(t.window().size() <= 5);
    prev = out;
  }
}
