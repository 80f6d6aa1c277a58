#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "nwc/dataset.hpp"
#include "nwc/grid.hpp"
#include "nwc/model.hpp"
#include "nwc/train.hpp"

namespace nwc {

/// Flat key=value text. Blank lines and '#' comments are ignored on input;
/// output is sorted by key, one entry per line.
class KeyValues {
 public:
  static KeyValues parse(const std::string& text);
  static KeyValues load(const std::filesystem::path& path);
  std::string to_text() const;
  void save(const std::filesystem::path& path) const;

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  const std::string& get(const std::string& key) const;
  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

/// Everything a pipeline run depends on.
struct PipelineConfig {
  DatasetSpec dataset;
  ModelConfig model;
  TrainConfig train;
  std::vector<float> bin_edges;
  std::vector<float> rate_thresholds_mm_h{0.5F, 2.0F, 8.0F};
  float quality_w_min = kQualityFloor;

  ClassBinning binning() const { return ClassBinning(bin_edges); }
  /// Keeps model geometry in step with the dataset geometry.
  void sync();
  void validate() const;
};

PipelineConfig preset_config(const std::string& preset);

KeyValues to_key_values(const PipelineConfig& config);
/// Starts from the preset named by the `preset` key and applies every
/// other key; unknown keys are a ConfigError.
PipelineConfig from_key_values(const KeyValues& kv);
/// Override individual keys of an existing configuration.
void apply_overrides(PipelineConfig& config, const KeyValues& overrides);

std::string resolved_config_text(const PipelineConfig& config);

}  // namespace nwc
