#include "nwc/quality.hpp"

#include <algorithm>

#include "nwc/errors.hpp"
#include "nwc/sources.hpp"

namespace nwc {

void StreamingMean::add(const RasterFrame& frame) {
  if (count_ == 0) {
    height_ = frame.height();
    width_ = frame.width();
    resolution_km_ = frame.resolution_km();
    sum_.assign(static_cast<std::size_t>(height_) * width_, 0.0);
  } else if (frame.height() != height_ || frame.width() != width_ || frame.resolution_km() != resolution_km_) {
    throw ShapeError("frame geometry differs from the running mean");
  }
  const auto v = frame.values();
  for (std::size_t i = 0; i < sum_.size(); ++i) sum_[i] += v[i];
  ++count_;
}

RasterFrame StreamingMean::result() const {
  if (count_ == 0) throw ContractError("mean of an empty frame stream");
  std::vector<float> out(sum_.size());
  for (std::size_t i = 0; i < sum_.size(); ++i) out[i] = static_cast<float>(sum_[i] / static_cast<double>(count_));
  return RasterFrame(height_, width_, resolution_km_, 0, std::move(out));
}

RasterFrame mean_precip_map(std::span<const RasterFrame> frames) {
  StreamingMean mean;
  for (const auto& f : frames) mean.add(f);
  return mean.result();
}

QualityMap quality_weights(const RasterFrame& mean_map, float w_min) {
  mean_map.require_rain();
  std::vector<float> positive;
  for (float v : mean_map.values()) {
    if (v > 0.0F) positive.push_back(v);
  }
  if (positive.empty()) throw DegenerateInputError("mean precipitation map is zero everywhere");
  const std::size_t mid = positive.size() / 2;
  std::nth_element(positive.begin(), positive.begin() + static_cast<std::ptrdiff_t>(mid), positive.end());
  double median = positive[mid];
  if (positive.size() % 2 == 0) {
    const float lower = *std::max_element(positive.begin(), positive.begin() + static_cast<std::ptrdiff_t>(mid));
    median = 0.5 * (median + lower);
  }
  std::vector<float> w;
  w.reserve(mean_map.values().size());
  for (float v : mean_map.values()) {
    const double ratio = v > 0.0F ? v / median : 0.0;
    w.push_back(static_cast<float>(std::clamp(ratio, static_cast<double>(w_min), 1.0)));
  }
  return {RasterFrame(mean_map.height(), mean_map.width(), mean_map.resolution_km(), mean_map.timestamp_min(), std::move(w)),
          w_min};
}

std::vector<float> QualityMap::crop(int cx, int cy, int size_px) const {
  if (weights.height() != weights.width()) throw ShapeError("quality map must be square to crop periodically");
  std::vector<float> all(weights.values().begin(), weights.values().end());
  return extract_window(all, weights.height(), cx, cy, size_px);
}

}  // namespace nwc
