#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "nwc/grid.hpp"
#include "nwc/rng.hpp"
#include "nwc/sources.hpp"
#include "nwc/world.hpp"

namespace nwc {

/// Repeating split layout. Each cycle is
/// train | blackout | val | blackout | test, in hours.
struct SplitSchedule {
  int cycle_hours = 200;
  int train_hours = 140;
  int blackout_hours = 12;
  int val_hours = 18;
  int test_hours = 18;

  void validate() const;
  std::int64_t cycle_min() const { return std::int64_t{cycle_hours} * 60; }
};

/// Pure function of (t mod cycle).
Split assign_split(std::int64_t t_min, const SplitSchedule& schedule = {});

struct ImportanceSampling {
  double epsilon = 0.02;
  double f_ref = 0.05;
  float rain_threshold_mm_h = 0.1F;

  double keep_probability(double rainy_fraction) const;
};

/// Fraction of target pixels (over all lead frames) at or above the threshold.
double rainy_fraction(const FieldStack& targets, float threshold_mm_h);

bool importance_keep(const Sample& sample, Rng& rng, const ImportanceSampling& params = {});

/// Time span a window touches relative to its issue time t0.
struct WindowExtent {
  int past_min = 0;    ///< most negative input offset (<= 0)
  int future_min = 0;  ///< furthest target or forecast offset (>= 0)
};

WindowExtent window_extent(const std::vector<SourceSpec>& sources, const TargetSpec& target);

/// Split of a window, or Blackout when it is not usable: it must lie in one
/// segment, and train windows keep one blackout length after the previous
/// cycle's test segment.
Split window_split(std::int64_t t0_min, const WindowExtent& extent, const SplitSchedule& schedule);

struct DatasetSpec {
  std::string preset = "desk";
  std::uint64_t seed = 7;
  int hours = 1200;
  int train_cap = 2000;
  int val_cap = 200;
  int test_cap = 500;
  std::vector<SourceSpec> sources;
  TargetSpec target;
  WorldConfig world;
  SplitSchedule schedule;
  ImportanceSampling importance;
  RenderOptions render;
};

struct ManifestEntry {
  std::string id;
  Split split = Split::Train;
  std::int64_t t0_min = 0;
  int center_x_px = 0;
  int center_y_px = 0;
  std::vector<int> leads_min;
  std::vector<std::string> paths;
  std::string content_hash;
};

struct Manifest {
  std::string preset;
  std::uint64_t seed = 0;
  int hours = 0;
  int train_count = 0;
  int val_count = 0;
  int test_count = 0;
  int train_stream_windows = 0;
  double train_stream_rain_fraction = 0.0;
  double train_kept_rain_fraction = 0.0;
  std::vector<ManifestEntry> entries;

  std::string split_hash(Split split) const;
  std::vector<const ManifestEntry*> of_split(Split split) const;
  std::string to_text() const;
  static Manifest parse(const std::string& text);
  static Manifest load(const std::filesystem::path& path);
};

/// Paper-scale counts recorded in every manifest for reference.
inline constexpr int kReferenceTrainCount = 1000000;
inline constexpr int kReferenceValCount = 5000;
inline constexpr int kReferenceTestCount = 13188;

/// Simulate the timeline and write samples plus `manifest.txt` under out_dir.
Manifest build_dataset(const DatasetSpec& spec, const std::filesystem::path& out_dir);

Sample load_sample(const std::filesystem::path& root, const ManifestEntry& entry);

/// Smallest gap between windows of different splits, in minutes, including
/// the full input/target extents. Exhaustive over all pairs.
std::int64_t min_cross_split_gap_min(const Manifest& manifest, const WindowExtent& extent);

/// Re-run the generator and hand every `stride_steps`-th full-domain
/// observed radar frame to `sink`.
void stream_radar_frames(const DatasetSpec& spec, int stride_steps, const std::function<void(const RasterFrame&)>& sink);

}  // namespace nwc
