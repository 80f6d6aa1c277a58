#pragma once

#include <string>
#include <utility>
#include <vector>

#include "nwc/grid.hpp"

namespace nwc {

/// Binary greyscale; values scaled linearly from [0, vmax] to [0, 255].
std::vector<unsigned char> encode_pgm(const RasterFrame& frame, float vmax);

/// Panels side by side on a white background, rain colour ramp up to vmax.
std::vector<unsigned char> encode_ppm_montage(const std::vector<RasterFrame>& panels, float vmax, int gap_px = 2);

struct ChartSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;  ///< NaN y values are skipped
};

std::string line_chart_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<ChartSeries>& series, double y_min = 0.0, double y_max = 1.0);

}  // namespace nwc
