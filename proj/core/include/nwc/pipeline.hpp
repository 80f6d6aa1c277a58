#pragma once

// Glue between the dataset on disk and the model, calibration and
// verification steps; shared by the command-line tool and the tests.

#include <filesystem>
#include <string>
#include <vector>

#include "nwc/calibrate.hpp"
#include "nwc/config.hpp"
#include "nwc/dataset.hpp"
#include "nwc/model.hpp"
#include "nwc/quality.hpp"
#include "nwc/train.hpp"

namespace nwc {

/// Quality file: NWC1 with two frames, mean rate then weights.
void save_quality(const std::filesystem::path& path, const RasterFrame& mean_map, const QualityMap& quality);
QualityMap load_quality(const std::filesystem::path& path, float w_min = kQualityFloor);

/// Hourly full-domain mean of observed radar over the dataset timeline.
RasterFrame simulate_mean_map(const DatasetSpec& spec);

std::vector<PreparedSample> prepare_split(const std::filesystem::path& root, const Manifest& manifest, Split split,
                                          const PipelineConfig& config, const QualityMap* quality);

/// One forward pass per lead, batched; index = lead.
std::vector<ForecastDistribution> forecast_all_leads(const TauModel<float>& model, const ModelInput& input);

ThresholdTable calibrate_model(const TauModel<float>& model, const std::vector<PreparedSample>& val,
                               const ClassBinning& binning, std::vector<std::string>* warnings = nullptr);

RasterFrame latest_radar(const Sample& sample, int offset_min = 0);
RasterFrame persistence_forecast(const Sample& sample, const TargetSpec& target, int lead_idx);
RasterFrame advection_forecast(const Sample& sample, const TargetSpec& target, int lead_idx);
RasterFrame nwp_forecast(const Sample& sample, const TargetSpec& target, int lead_idx);

struct EvalOptions {
  const TauModel<float>* model = nullptr;  ///< scored as "model" with `thresholds`
  const ThresholdTable* thresholds = nullptr;
  bool baselines = true;  ///< persistence, advection, nwp
  bool truth = false;     ///< observed field as its own forecast
  std::size_t limit = 0;  ///< 0 = whole split
};

MetricsTable evaluate_split(const std::filesystem::path& root, const Manifest& manifest, Split split,
                            const PipelineConfig& config, const EvalOptions& options);

}  // namespace nwc
