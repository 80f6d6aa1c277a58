#include "nwc/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "nwc/errors.hpp"

namespace nwc {

namespace {

std::vector<int> offsets_range(int first, int last, int step) {
  std::vector<int> out;
  for (int v = first; v <= last; v += step) out.push_back(v);
  return out;
}

double snap(double v) {
  const double r = std::round(v);
  return std::abs(v - r) < 1e-9 ? r : v;
}

struct Tap {
  int index;
  double weight;
};

// Sparse 1D weights for center-aligned resampling along one axis.
std::vector<std::vector<Tap>> axis_weights(int n_src, double src_res, int n_dst, double dst_res, ResampleMode mode) {
  const double src_extent = n_src * src_res;
  const double dst_extent = n_dst * dst_res;
  if (dst_extent > src_extent * (1.0 + 1e-6)) {
    std::ostringstream msg;
    msg << "requested extent " << dst_extent << " km exceeds source extent " << src_extent << " km";
    throw CoverageError(msg.str());
  }
  std::vector<std::vector<Tap>> out(static_cast<std::size_t>(n_dst));
  for (int i = 0; i < n_dst; ++i) {
    const double x0 = i * dst_res - dst_extent / 2.0;
    const double a = snap((x0 + src_extent / 2.0) / src_res);
    const double b = snap((x0 + dst_res + src_extent / 2.0) / src_res);
    auto& taps = out[static_cast<std::size_t>(i)];
    switch (mode) {
      case ResampleMode::AreaAverage: {
        const int lo = std::max(0, static_cast<int>(std::floor(a)));
        const int hi = std::min(n_src, static_cast<int>(std::ceil(b)));
        double total = 0.0;
        for (int j = lo; j < hi; ++j) {
          const double overlap = std::min(b, j + 1.0) - std::max(a, static_cast<double>(j));
          if (overlap > 1e-12) {
            taps.push_back({j, overlap});
            total += overlap;
          }
        }
        for (auto& t : taps) t.weight /= total;
        break;
      }
      case ResampleMode::Bilinear: {
        double u = snap(0.5 * (a + b) - 0.5);
        u = std::clamp(u, 0.0, static_cast<double>(n_src - 1));
        int j0 = static_cast<int>(std::floor(u));
        double t = u - j0;
        if (j0 >= n_src - 1) {
          j0 = n_src - 1;
          t = 0.0;
        }
        taps.push_back({j0, 1.0 - t});
        if (t > 0.0) taps.push_back({j0 + 1, t});
        break;
      }
      case ResampleMode::Nearest: {
        const int j = std::clamp(static_cast<int>(std::floor(0.5 * (a + b))), 0, n_src - 1);
        taps.push_back({j, 1.0});
        break;
      }
    }
  }
  return out;
}

}  // namespace

RasterFrame::RasterFrame(int height, int width, float resolution_km, std::int64_t timestamp_min,
                         std::vector<float> values)
    : height_(height), width_(width), resolution_km_(resolution_km), timestamp_min_(timestamp_min),
      values_(std::move(values)) {
  if (height <= 0 || width <= 0) throw ShapeError("raster dimensions must be positive");
  if (!(resolution_km > 0.0F) || !std::isfinite(resolution_km)) throw InputDomainError("resolution must be positive");
  if (values_.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width)) {
    throw ShapeError("raster value count does not match height x width");
  }
  for (float v : values_) {
    if (!std::isfinite(v)) throw InputDomainError("raster contains non-finite values");
  }
}

RasterFrame RasterFrame::filled(int height, int width, float resolution_km, float value, std::int64_t timestamp_min) {
  return RasterFrame(height, width, resolution_km, timestamp_min,
                     std::vector<float>(static_cast<std::size_t>(height) * width, value));
}

void RasterFrame::require_rain() const {
  for (float v : values_) {
    if (v < 0.0F) throw InputDomainError("rain-rate frame contains negative values");
  }
}

FieldStack FieldStack::zeros(int timesteps, int channels, int height, int width, float resolution_km) {
  FieldStack s;
  s.timesteps = timesteps;
  s.channels = channels;
  s.height = height;
  s.width = width;
  s.resolution_km = resolution_km;
  s.timestamps_min.assign(static_cast<std::size_t>(timesteps), 0);
  s.values.assign(static_cast<std::size_t>(timesteps) * channels * height * width, 0.0F);
  return s;
}

std::span<const float> FieldStack::plane(int t, int c) const {
  const std::size_t off = (static_cast<std::size_t>(t) * channels + c) * plane_size();
  return {values.data() + off, plane_size()};
}

std::span<float> FieldStack::plane(int t, int c) {
  const std::size_t off = (static_cast<std::size_t>(t) * channels + c) * plane_size();
  return {values.data() + off, plane_size()};
}

RasterFrame FieldStack::frame(int t, int c) const {
  if (t < 0 || t >= timesteps || c < 0 || c >= channels) throw IndexError("stack frame index out of range");
  auto p = plane(t, c);
  return RasterFrame(height, width, resolution_km, timestamps_min.at(static_cast<std::size_t>(t)),
                     std::vector<float>(p.begin(), p.end()));
}

void FieldStack::validate() const {
  if (timesteps <= 0 || channels <= 0 || height <= 0 || width <= 0) throw ShapeError("empty field stack");
  if (values.size() != static_cast<std::size_t>(timesteps) * channels * plane_size()) {
    throw ShapeError("field stack value count mismatch");
  }
  if (timestamps_min.size() != static_cast<std::size_t>(timesteps)) throw ShapeError("field stack timestamp count");
}

bool SourceSpec::has_offset(int minutes) const {
  return std::find(timestep_offsets_min.begin(), timestep_offsets_min.end(), minutes) != timestep_offsets_min.end();
}

std::vector<SourceSpec> canonical_sources() {
  return {
      {"radar_2km", 288, 2.0F, 112.0F, offsets_range(-90, 0, 10), 1},
      {"radar_4km", 288, 4.0F, 512.0F, {0}, 1},
      {"satellite_4km", 288, 4.0F, 512.0F, {-30, -15, 0}, 11},
      {"gfs_8km", 144, 8.0F, 512.0F, {0}, 122},
      {"gfs_forecast_8km", 144, 8.0F, 512.0F, offsets_range(60, 480, 60), 1},
      {"xyz_2km", 288, 2.0F, 112.0F, {}, 3},
      {"minute_2km", 288, 2.0F, 112.0F, {}, 1},
  };
}

TargetSpec canonical_target() { return {"target_2km", 64, 2.0F, offsets_range(10, 480, 10), 1}; }

std::vector<SourceSpec> desk_sources() {
  return {
      {"radar_2km", 144, 2.0F, 56.0F, offsets_range(-90, 0, 10), 1},
      {"radar_4km", 144, 4.0F, 256.0F, {0}, 1},
      {"satellite_4km", 144, 4.0F, 256.0F, {-30, -15, 0}, 4},
      {"gfs_8km", 72, 8.0F, 256.0F, {0}, 16},
      {"gfs_forecast_8km", 72, 8.0F, 256.0F, offsets_range(60, 120, 60), 1},
      {"xyz_2km", 144, 2.0F, 56.0F, {}, 3},
      {"minute_2km", 144, 2.0F, 56.0F, {}, 1},
  };
}

TargetSpec desk_target() { return {"target_2km", 32, 2.0F, offsets_range(10, 120, 10), 1}; }

void validate_source(const SourceSpec& spec, const TargetSpec& target) {
  if (spec.name.empty()) throw ConfigError("source without a name");
  if (spec.size_px <= 0 || !(spec.resolution_km > 0.0F) || spec.channels <= 0) {
    throw ConfigError("source " + spec.name + " has non-positive geometry");
  }
  if (!std::is_sorted(spec.timestep_offsets_min.begin(), spec.timestep_offsets_min.end())) {
    throw ConfigError("source " + spec.name + " offsets are not ordered");
  }
  if (spec.context_km) {
    if (*spec.context_km < 0.0F) throw ConfigError("source " + spec.name + " has negative context");
    if (spec.extent_km() + 1e-3F < target.extent_km() + 2.0F * *spec.context_km) {
      throw ConfigError("source " + spec.name + " does not cover target extent plus context");
    }
  }
}

ClassBinning::ClassBinning(std::vector<float> edges) : edges_(std::move(edges)) {
  if (edges_.size() < 3) throw ConfigError("binning needs at least two classes");
  if (edges_.front() != 0.0F) throw ConfigError("first bin edge must be 0");
  if (!std::isinf(edges_.back())) throw ConfigError("last bin edge must be +inf");
  for (std::size_t i = 1; i < edges_.size(); ++i) {
    if (!(edges_[i] > edges_[i - 1])) throw ConfigError("bin edges must be strictly increasing");
  }
  // bounded widths must not shrink
  for (std::size_t i = 2; i + 1 < edges_.size(); ++i) {
    if (edges_[i] - edges_[i - 1] < edges_[i - 1] - edges_[i - 2]) {
      throw ConfigError("bin widths must be non-decreasing");
    }
  }
}

ClassBinning ClassBinning::default_edges() {
  return ClassBinning({0.0F, 0.1F, 0.5F, 1.0F, 2.0F, 4.0F, 8.0F, 16.0F, 32.0F, std::numeric_limits<float>::infinity()});
}

float ClassBinning::lower_edge(int k) const {
  if (k < 0 || k >= classes()) throw IndexError("class index out of range");
  return edges_[static_cast<std::size_t>(k)];
}

int ClassBinning::bin(float rate) const {
  if (!std::isfinite(rate) || rate < 0.0F) throw InputDomainError("rain rate must be finite and non-negative");
  // edges[k] <= rate < edges[k+1]
  const auto it = std::upper_bound(edges_.begin(), edges_.end(), rate);
  return static_cast<int>(it - edges_.begin()) - 1;
}

float ClassBinning::representative(int k) const {
  if (k < 0 || k >= classes()) throw IndexError("class index out of range");
  const auto i = static_cast<std::size_t>(k);
  if (k == classes() - 1) return 1.5F * edges_[i];
  return 0.5F * (edges_[i] + edges_[i + 1]);
}

void resample_plane(std::span<const float> src, int src_h, int src_w, float src_res, std::span<float> dst,
                    int dst_size, float dst_res, ResampleMode mode) {
  if (src.size() != static_cast<std::size_t>(src_h) * src_w) throw ShapeError("resample source size mismatch");
  if (dst.size() != static_cast<std::size_t>(dst_size) * dst_size) throw ShapeError("resample target size mismatch");
  const auto rows = axis_weights(src_h, src_res, dst_size, dst_res, mode);
  const auto cols = axis_weights(src_w, src_res, dst_size, dst_res, mode);

  std::vector<double> tmp(static_cast<std::size_t>(src_h) * dst_size, 0.0);
  for (int r = 0; r < src_h; ++r) {
    const float* row = src.data() + static_cast<std::size_t>(r) * src_w;
    for (int c = 0; c < dst_size; ++c) {
      double acc = 0.0;
      for (const Tap& t : cols[static_cast<std::size_t>(c)]) acc += t.weight * row[t.index];
      tmp[static_cast<std::size_t>(r) * dst_size + c] = acc;
    }
  }
  for (int i = 0; i < dst_size; ++i) {
    for (int c = 0; c < dst_size; ++c) {
      double acc = 0.0;
      for (const Tap& t : rows[static_cast<std::size_t>(i)]) acc += t.weight * tmp[static_cast<std::size_t>(t.index) * dst_size + c];
      dst[static_cast<std::size_t>(i) * dst_size + c] = static_cast<float>(acc);
    }
  }
}

RasterFrame resample(const RasterFrame& frame, float target_resolution_km, int target_size, ResampleMode mode) {
  if (target_size <= 0 || !(target_resolution_km > 0.0F)) throw ShapeError("invalid resample target");
  std::vector<float> out(static_cast<std::size_t>(target_size) * target_size);
  resample_plane(frame.values(), frame.height(), frame.width(), frame.resolution_km(), out, target_size,
                 target_resolution_km, mode);
  return RasterFrame(target_size, target_size, target_resolution_km, frame.timestamp_min(), std::move(out));
}

RasterFrame resample_rain(const RasterFrame& frame, float target_resolution_km, int target_size) {
  const auto mode = target_resolution_km >= frame.resolution_km() ? ResampleMode::AreaAverage : ResampleMode::Bilinear;
  return resample(frame, target_resolution_km, target_size, mode);
}

FieldStack resample_stack(const FieldStack& stack, float target_resolution_km, int target_size) {
  FieldStack out = FieldStack::zeros(stack.timesteps, stack.channels, target_size, target_size, target_resolution_km);
  out.timestamps_min = stack.timestamps_min;
  const auto mode = target_resolution_km >= stack.resolution_km ? ResampleMode::AreaAverage : ResampleMode::Bilinear;
  for (int t = 0; t < stack.timesteps; ++t) {
    for (int c = 0; c < stack.channels; ++c) {
      resample_plane(stack.plane(t, c), stack.height, stack.width, stack.resolution_km, out.plane(t, c), target_size,
                     target_resolution_km, mode);
    }
  }
  return out;
}

const char* split_name(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
    case Split::Blackout: return "blackout";
  }
  return "?";
}

Split parse_split(const std::string& text) {
  if (text == "train") return Split::Train;
  if (text == "val") return Split::Val;
  if (text == "test") return Split::Test;
  if (text == "blackout") return Split::Blackout;
  throw FormatError("unknown split '" + text + "'");
}

RasterFrame Sample::target() const {
  if (lead_idx < 0 || lead_idx >= targets.timesteps) throw IndexError("lead index out of range");
  return targets.frame(lead_idx, 0);
}

}  // namespace nwc
