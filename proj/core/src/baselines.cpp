#include "nwc/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "nwc/errors.hpp"

namespace nwc {

RasterFrame persistence(const RasterFrame& last, int lead_steps) {
  if (lead_steps < 0) throw InputDomainError("negative lead");
  return last;
}

Motion estimate_motion(const RasterFrame& prev, const RasterFrame& last, int max_shift) {
  if (prev.height() != last.height() || prev.width() != last.width()) throw ShapeError("motion frames differ in geometry");
  if (max_shift < 0) throw InputDomainError("negative shift range");
  const int h = last.height();
  const int w = last.width();
  const auto a = prev.values();
  const auto b = last.values();
  Motion best;
  double best_score = -1.0;
  int best_norm = 0;
  for (int dy = -max_shift; dy <= max_shift; ++dy) {
    for (int dx = -max_shift; dx <= max_shift; ++dx) {
      const int y0 = std::max(0, dy);
      const int y1 = std::min(h, h + dy);
      const int x0 = std::max(0, dx);
      const int x1 = std::min(w, w + dx);
      if (y1 <= y0 || x1 <= x0) continue;
      double acc = 0.0;
      double ea = 0.0;
      double eb = 0.0;
      for (int y = y0; y < y1; ++y) {
        const float* lr = b.data() + static_cast<std::size_t>(y) * w;
        const float* pr = a.data() + static_cast<std::size_t>(y - dy) * w;
        for (int x = x0; x < x1; ++x) {
          const double l = lr[x];
          const double p = pr[x - dx];
          acc += l * p;
          ea += p * p;
          eb += l * l;
        }
      }
      // cosine over the overlap: exactly 1 at a pure translation, whatever
      // mass left the frame, and no pull towards small bright overlaps
      const double score = (ea > 0.0 && eb > 0.0) ? acc / std::sqrt(ea * eb) : 0.0;
      const int norm = dx * dx + dy * dy;
      // scan order already makes (dy, dx) ascending the last tie-break
      if (score > best_score || (score == best_score && norm < best_norm)) {
        best_score = score;
        best_norm = norm;
        best = Motion{dx, dy};
      }
    }
  }
  return best;
}

RasterFrame shift_frame(const RasterFrame& frame, int dx, int dy) {
  const int h = frame.height();
  const int w = frame.width();
  std::vector<float> out(static_cast<std::size_t>(h) * w, 0.0F);
  for (int y = std::max(0, dy); y < std::min(h, h + dy); ++y) {
    for (int x = std::max(0, dx); x < std::min(w, w + dx); ++x) {
      out[static_cast<std::size_t>(y) * w + x] = frame.at(y - dy, x - dx);
    }
  }
  return RasterFrame(h, w, frame.resolution_km(), frame.timestamp_min(), std::move(out));
}

RasterFrame advect_extrapolate(const RasterFrame& prev, const RasterFrame& last, int lead_steps, int max_shift) {
  if (lead_steps < 0) throw InputDomainError("negative lead");
  const Motion m = estimate_motion(prev, last, max_shift);
  return shift_frame(last, m.dx * lead_steps, m.dy * lead_steps);
}

RasterFrame interp_nwp(const std::vector<RasterFrame>& frames, float target_resolution_km, int target_size,
                       std::int64_t t_min) {
  if (frames.empty()) throw CoverageError("no NWP frames");
  for (std::size_t i = 1; i < frames.size(); ++i) {
    if (frames[i].timestamp_min() <= frames[i - 1].timestamp_min()) throw ContractError("NWP frames must be time-ordered");
  }
  if (t_min < frames.front().timestamp_min() || t_min > frames.back().timestamp_min()) {
    throw CoverageError("time " + std::to_string(t_min) + " outside NWP frames");
  }
  std::size_t hi = 0;
  while (frames[hi].timestamp_min() < t_min) ++hi;
  const RasterFrame b = resample(frames[hi], target_resolution_km, target_size, ResampleMode::Bilinear);
  if (frames[hi].timestamp_min() == t_min) {
    return RasterFrame(target_size, target_size, target_resolution_km, t_min, {b.values().begin(), b.values().end()});
  }
  const RasterFrame a = resample(frames[hi - 1], target_resolution_km, target_size, ResampleMode::Bilinear);
  const double t0 = static_cast<double>(frames[hi - 1].timestamp_min());
  const double t1 = static_cast<double>(frames[hi].timestamp_min());
  const double f = (static_cast<double>(t_min) - t0) / (t1 - t0);
  std::vector<float> out(a.values().size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<float>((1.0 - f) * a.values()[i] + f * b.values()[i]);
  }
  return RasterFrame(target_size, target_size, target_resolution_km, t_min, std::move(out));
}

RasterFrame crop_center(const RasterFrame& frame, int size) {
  const int h = frame.height();
  const int w = frame.width();
  if (size < 1 || size > h || size > w || (h - size) % 2 != 0 || (w - size) % 2 != 0) {
    throw ShapeError("cannot center-crop " + std::to_string(h) + "x" + std::to_string(w) + " to " + std::to_string(size));
  }
  const int oy = (h - size) / 2;
  const int ox = (w - size) / 2;
  std::vector<float> out;
  out.reserve(static_cast<std::size_t>(size) * size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) out.push_back(frame.at(oy + y, ox + x));
  }
  return RasterFrame(size, size, frame.resolution_km(), frame.timestamp_min(), std::move(out));
}

}  // namespace nwc
