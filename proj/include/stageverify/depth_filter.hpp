#pragma once

#include <cstddef>
#include <deque>
#include <optional>

namespace sv {

/// Sliding lower-median over the last `n_window` valid samples, followed by
/// exponential smoothing toward that median.
class DepthTrack {
 public:
  explicit DepthTrack(int n_window = 5, double alpha = 0.3);

  /// Nonpositive or non-finite samples leave the track untouched and return
  /// the previous output. Empty until the first valid sample.
  std::optional<double> push(double sample_mm);

  std::optional<double> value() const { return ema_; }
  const std::deque<double>& window() const { return window_; }
  int capacity() const { return n_window_; }
  double alpha() const { return alpha_; }

 private:
  std::deque<double> window_;
  std::optional<double> ema_;
  int n_window_;
  double alpha_;
};

/// Lower median of a nonempty range (element n/2 for odd n, (n-1)/2 for even).
double lower_median(std::deque<double> values);

}  // namespace sv
