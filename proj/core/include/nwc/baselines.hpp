#pragma once

#include <cstdint>
#include <vector>

#include "nwc/grid.hpp"

namespace nwc {

/// The most recent observed frame, for every lead.
RasterFrame persistence(const RasterFrame& last, int lead_steps);

struct Motion {
  int dx = 0;  ///< pixels per step, +x = columns
  int dy = 0;
  bool operator==(const Motion&) const = default;
};

/// Integer shift maximizing the cosine similarity of last(x) and prev(x - d) over the overlap.
/// Ties go to the smallest dx^2 + dy^2, then to smaller (dy, dx).
Motion estimate_motion(const RasterFrame& prev, const RasterFrame& last, int max_shift = 16);

/// out(x) = in(x - d), zero where the source falls outside the frame.
RasterFrame shift_frame(const RasterFrame& frame, int dx, int dy);

/// Last frame moved lead_steps times the estimated motion; intensity held.
RasterFrame advect_extrapolate(const RasterFrame& prev, const RasterFrame& last, int lead_steps, int max_shift = 16);

/// Bilinear in space onto a centered target grid, linear in time between the
/// bracketing frames (sorted by timestamp). Beyond the last frame is a
/// CoverageError.
RasterFrame interp_nwp(const std::vector<RasterFrame>& frames, float target_resolution_km, int target_size,
                       std::int64_t t_min);

/// Centered square crop.
RasterFrame crop_center(const RasterFrame& frame, int size);

}  // namespace nwc
