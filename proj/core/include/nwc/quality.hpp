#pragma once

#include <span>
#include <vector>

#include "nwc/grid.hpp"

namespace nwc {

/// Single-pass per-pixel mean; memory is constant in the number of frames.
class StreamingMean {
 public:
  void add(const RasterFrame& frame);
  std::size_t count() const { return count_; }
  RasterFrame result() const;

 private:
  int height_ = 0;
  int width_ = 0;
  float resolution_km_ = 0.0F;
  std::size_t count_ = 0;
  std::vector<double> sum_;
};

RasterFrame mean_precip_map(std::span<const RasterFrame> frames);

inline constexpr float kQualityFloor = 0.1F;

struct QualityMap {
  RasterFrame weights;
  float w_min = kQualityFloor;

  /// Square window centered on world pixel corner (cx, cy), periodic.
  std::vector<float> crop(int cx, int cy, int size_px) const;
};

/// w = clamp(m / median(m > 0), w_min, 1); pixels with m = 0 get w_min.
QualityMap quality_weights(const RasterFrame& mean_map, float w_min = kQualityFloor);

}  // namespace nwc
