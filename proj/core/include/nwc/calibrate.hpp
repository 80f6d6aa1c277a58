#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "nwc/grid.hpp"
#include "nwc/model.hpp"

namespace nwc {

/// theta[k][l] for classes 1..K-1; class 0 needs none.
class ThresholdTable {
 public:
  ThresholdTable() = default;
  ThresholdTable(int classes, int n_lead, double fill = 0.5);

  int classes() const { return classes_; }
  int n_lead() const { return n_lead_; }
  double at(int k, int lead) const;
  void set(int k, int lead, double theta);

  /// Lines "k l theta", k ascending then l.
  std::string to_text() const;
  static ThresholdTable parse(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static ThresholdTable load(const std::filesystem::path& path);

  bool operator==(const ThresholdTable&) const = default;

 private:
  std::size_t index(int k, int lead) const;
  int classes_ = 0;
  int n_lead_ = 0;
  std::vector<double> theta_;
};

struct ContingencyCounts {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t false_alarms = 0;
  std::uint64_t correct_negatives = 0;

  void add(bool forecast, bool observed) {
    if (forecast && observed) ++hits;
    else if (observed) ++misses;
    else if (forecast) ++false_alarms;
    else ++correct_negatives;
  }
  ContingencyCounts& operator+=(const ContingencyCounts& o) {
    hits += o.hits;
    misses += o.misses;
    false_alarms += o.false_alarms;
    correct_negatives += o.correct_negatives;
    return *this;
  }
  std::uint64_t total() const { return hits + misses + false_alarms + correct_negatives; }
  bool operator==(const ContingencyCounts&) const = default;
};

/// hits / (hits + misses + false_alarms); NaN when there are no events.
double csi(const ContingencyCounts& counts);

/// Events are rate >= threshold, in both fields.
ContingencyCounts count_events(std::span<const float> forecast, std::span<const float> observed, float threshold);

/// P(class >= k) for k = 0..K-1, summed from the top in double.
void tail_masses(const ForecastDistribution& dist, int row, int col, std::span<double> out);

RasterFrame decode_intensity(const ForecastDistribution& dist, const ThresholdTable& table, int lead,
                             const ClassBinning& binning, float resolution_km = 2.0F);

/// Candidate thresholds i/50, i = 1..49.
inline constexpr int kThetaSteps = 50;
inline double theta_grid(int i) { return static_cast<double>(i) / kThetaSteps; }

/// Streams validation forecasts and picks, per (class, lead), the grid
/// threshold with the best CSI; ties go to the smaller threshold.
class Calibrator {
 public:
  Calibrator(int classes, int n_lead, ClassBinning binning);

  void add(const ForecastDistribution& dist, std::span<const float> observed_mm_h);
  /// Counts at grid index i (theta = i/50) for one (class, lead) cell.
  ContingencyCounts counts_at(int k, int lead, int i) const;
  ThresholdTable finish(std::vector<std::string>* warnings = nullptr) const;

 private:
  std::size_t cell(int k, int lead) const;
  int classes_;
  int n_lead_;
  ClassBinning binning_;
  // per cell: histogram of "number of grid thresholds exceeded", split by observation
  std::vector<std::vector<std::uint64_t>> pos_;
  std::vector<std::vector<std::uint64_t>> neg_;
};

/// Contingency counts keyed by (model, rate threshold, lead).
class MetricsTable {
 public:
  struct Key {
    std::string model;
    float threshold_mm_h;
    int lead_min;
    auto operator<=>(const Key&) const = default;
  };

  void add(const std::string& model, int lead_min, std::span<const float> forecast, std::span<const float> observed,
           std::span<const float> thresholds);
  void merge(const MetricsTable& other);
  const std::map<Key, ContingencyCounts>& cells() const { return cells_; }
  const ContingencyCounts& at(const std::string& model, float threshold, int lead_min) const;
  /// Columns model, rate_threshold_mm_h, lead_min, hits, misses, false_alarms, csi.
  std::string to_csv() const;

 private:
  std::map<Key, ContingencyCounts> cells_;
};

/// Shortest round-trip decimal form.
std::string format_number(double v);

}  // namespace nwc
