#include "stageverify/depth_filter.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sv {

DepthTrack::DepthTrack(int n_window, double alpha)
    : n_window_(n_window), alpha_(alpha) {
  if (n_window < 1) throw std::invalid_argument("depth window must be >= 1");
  if (!(alpha > 0 && alpha <= 1))
    throw std::invalid_argument("depth alpha must be in (0,1]");
}

double lower_median(std::deque<double> values) {
  if (values.empty()) throw std::invalid_argument("median of empty window");
  auto mid = values.begin() +
             static_cast<std::ptrdiff_t>((values.size() - 1) / 2);
  std::nth_element(values.begin(), mid, values.end());
  return *mid;
}

std::optional<double> DepthTrack::push(double sample_mm) {
  if (!std::isfinite(sample_mm) || sample_mm <= 0) return ema_;
  window_.push_back(sample_mm);
  if (static_cast<int>(window_.size()) > n_window_) window_.pop_front();
  const double med = lower_median(window_);
  if (!ema_ || alpha_ == 1.0)
    ema_ = med;
  else
    ema_ = *ema_ + alpha_ * (med - *ema_);
  return ema_;
}

}  // namespace sv
