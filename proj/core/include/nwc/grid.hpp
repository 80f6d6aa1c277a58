#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace nwc {

/// One 2D gridded field. Rain sources are in mm/h, derived channels are
/// unitless. Values are row-major, `height * width` entries, all finite.
class RasterFrame {
 public:
  RasterFrame() = default;
  RasterFrame(int height, int width, float resolution_km, std::int64_t timestamp_min,
              std::vector<float> values);

  static RasterFrame filled(int height, int width, float resolution_km, float value,
                            std::int64_t timestamp_min = 0);

  int height() const { return height_; }
  int width() const { return width_; }
  float resolution_km() const { return resolution_km_; }
  std::int64_t timestamp_min() const { return timestamp_min_; }
  float extent_h_km() const { return static_cast<float>(height_) * resolution_km_; }
  float extent_w_km() const { return static_cast<float>(width_) * resolution_km_; }

  float at(int row, int col) const { return values_[static_cast<std::size_t>(row) * width_ + col]; }
  std::span<const float> values() const { return values_; }

  /// Throws InputDomainError if any value is negative.
  void require_rain() const;

 private:
  int height_ = 0;
  int width_ = 0;
  float resolution_km_ = 1.0F;
  std::int64_t timestamp_min_ = 0;
  std::vector<float> values_;
};

/// A time x channel stack of frames sharing one geometry. Layout is
/// [timestep][channel][row][col].
struct FieldStack {
  int timesteps = 0;
  int channels = 0;
  int height = 0;
  int width = 0;
  float resolution_km = 1.0F;
  std::vector<std::int64_t> timestamps_min;
  std::vector<float> values;

  static FieldStack zeros(int timesteps, int channels, int height, int width, float resolution_km);

  std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
  std::span<const float> plane(int t, int c) const;
  std::span<float> plane(int t, int c);
  RasterFrame frame(int t, int c) const;
  void validate() const;
};

/// Per-source geometry and time contract.
struct SourceSpec {
  std::string name;
  int size_px = 0;
  float resolution_km = 1.0F;
  std::optional<float> context_km;
  std::vector<int> timestep_offsets_min;  ///< empty for static fields
  int channels = 1;

  float extent_km() const { return static_cast<float>(size_px) * resolution_km; }
  /// Static sources (no time axis) still carry one frame.
  int timesteps() const { return timestep_offsets_min.empty() ? 1 : static_cast<int>(timestep_offsets_min.size()); }
  bool has_offset(int minutes) const;

  bool operator==(const SourceSpec&) const = default;
};

struct TargetSpec {
  std::string name = "target_2km";
  int size_px = 64;
  float resolution_km = 2.0F;
  std::vector<int> lead_offsets_min;
  int channels = 1;

  float extent_km() const { return static_cast<float>(size_px) * resolution_km; }
  int n_lead() const { return static_cast<int>(lead_offsets_min.size()); }
  bool operator==(const TargetSpec&) const = default;
};

/// The seven input rows of the operational configuration.
std::vector<SourceSpec> canonical_sources();
TargetSpec canonical_target();

/// Desk-scale geometry: sizes and contexts halved, forecasts to 120 min,
/// reduced derived-channel counts for satellite and GFS proxies.
std::vector<SourceSpec> desk_sources();
TargetSpec desk_target();

/// Checks positivity and the context sizing rule against a target.
void validate_source(const SourceSpec& spec, const TargetSpec& target);

/// Rain-rate intensity classes. edges has K+1 entries, edges[0] = 0 and
/// edges[K] = +inf.
class ClassBinning {
 public:
  explicit ClassBinning(std::vector<float> edges);
  static ClassBinning default_edges();

  int classes() const { return static_cast<int>(edges_.size()) - 1; }
  std::span<const float> edges() const { return edges_; }
  float lower_edge(int k) const;

  int bin(float rate_mm_h) const;
  float representative(int k) const;

 private:
  std::vector<float> edges_;
};

inline int bin_intensity(float rate_mm_h, const ClassBinning& binning) { return binning.bin(rate_mm_h); }
inline float class_representative(int k, const ClassBinning& binning) { return binning.representative(k); }

enum class ResampleMode { Bilinear, AreaAverage, Nearest };

/// Center-aligned resampling onto a square `target_size` grid.
RasterFrame resample(const RasterFrame& frame, float target_resolution_km, int target_size, ResampleMode mode);

/// Area-average when coarsening (or equal), bilinear when refining.
RasterFrame resample_rain(const RasterFrame& frame, float target_resolution_km, int target_size);

/// Plane-level variant used by the stack helpers.
void resample_plane(std::span<const float> src, int src_h, int src_w, float src_res, std::span<float> dst,
                    int dst_size, float dst_res, ResampleMode mode);

FieldStack resample_stack(const FieldStack& stack, float target_resolution_km, int target_size);

enum class Split { Train, Val, Test, Blackout };

const char* split_name(Split split);
Split parse_split(const std::string& text);

/// One training/evaluation instance. `targets` holds one frame per lead
/// offset; `lead_idx` selects the frame used for a given forward pass.
struct Sample {
  std::string id;
  std::map<std::string, FieldStack> inputs;
  FieldStack targets;
  int lead_idx = 0;
  Split split = Split::Train;
  std::int64_t t0_min = 0;
  int center_x_px = 0;  ///< world-grid patch center (2 km pixels)
  int center_y_px = 0;

  RasterFrame target() const;
};

}  // namespace nwc
