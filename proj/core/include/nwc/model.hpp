#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nwc/container.hpp"
#include "nwc/grid.hpp"
#include "nwc/tensor.hpp"

namespace nwc {

struct ModelConfig {
  int target_size_px = 32;
  float target_resolution_km = 2.0F;
  int classes = 9;
  int n_lead = 12;
  int channels = 32;          ///< C, width of every per-source embedding
  int temporal_modules = 4;   ///< M
  int depth = 2;              ///< D, number of x2 resolution levels
  int decoder_margin_px = 2;  ///< latent pixels kept around the target
  int temporal_margin_px = 6; ///< extra latent pixels seen by the temporal stack
  /// 1x1 mixing across all T*C channels; false mixes within each timestep.
  bool temporal_pointwise_full = false;
  std::uint64_t seed = 1;
  std::vector<SourceSpec> sources;

  float latent_resolution_km() const;
  /// Common extent every source is standardized to (smallest source extent).
  float standard_extent_km() const;
  int latent_size() const;
  int decoder_window() const;
  int temporal_window() const;
  /// Total time slices entering the temporal stack (sources + lead slice).
  int time_slices() const;
  /// Decoder width at level l (0 = target resolution, depth = latent).
  int level_width(int level) const;
  /// Sources feeding the skip at level l: their offset-0 frame, all channels.
  std::vector<int> skip_sources(int level) const;
  int skip_channels(int level) const;
  void validate() const;
};

ModelConfig desk_model_config();
ModelConfig canonical_model_config();

/// Sources standardized to the latent grid and skip grids, outside the
/// autodiff graph. Rain-valued sources are log1p-compressed.
struct ModelInput {
  std::vector<std::vector<float>> sources;  ///< [T_s][ch_s][L][L] per source
  std::vector<std::vector<float>> skips;    ///< [ch_l][S_l][S_l] per level
};

ModelInput prepare_input(const ModelConfig& config, const std::map<std::string, FieldStack>& inputs);

struct ForecastDistribution {
  int classes = 0;
  int height = 0;
  int width = 0;
  int lead_idx = 0;
  std::vector<float> probs;  ///< [K][H][W]

  float p(int k, int row, int col) const {
    return probs[(static_cast<std::size_t>(k) * height + row) * width + col];
  }
};

template <class T>
struct NamedParam {
  std::string name;
  ad::Tensor<T> tensor;
};

template <class T>
class TauModel {
 public:
  using Tensor = ad::Tensor<T>;

  explicit TauModel(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  const std::vector<NamedParam<T>>& parameters() const { return params_; }
  std::vector<Tensor> parameter_tensors() const;
  std::size_t parameter_count() const;
  Tensor& param(const std::string& name);
  const Tensor& param(const std::string& name) const;

  /// Embedded source on a `window`-sized latent crop: [N, T_s*C, window, window].
  Tensor encode_source(std::size_t source, const std::vector<const ModelInput*>& batch, int window) const;
  /// Output has the input's shape.
  Tensor temporal_module(int m, const Tensor& x) const;
  /// latent [N, C, w, w] at decoder window; skips[l] is [N, ch_l, S_l, S_l].
  Tensor decode(const Tensor& latent, const std::vector<Tensor>& skips, const std::vector<int>& leads) const;
  Tensor skip_tensor(int level, const std::vector<const ModelInput*>& batch) const;

  /// Class probabilities [N, K, target, target].
  Tensor forward(const std::vector<const ModelInput*>& batch, const std::vector<int>& leads) const;

  std::vector<NamedArray> to_arrays() const;
  void load_arrays(const std::vector<NamedArray>& arrays);
  void save(const std::filesystem::path& path) const;
  void load(const std::filesystem::path& path);

 private:
  void add_param(const std::string& name, ad::Shape shape, int fan_in, bool bias);
  Tensor lead_tiles(const std::vector<int>& leads, int window) const;

  ModelConfig config_;
  std::vector<NamedParam<T>> params_;
};

extern template class TauModel<float>;
extern template class TauModel<double>;

/// Forecast distribution for sample index i of a probs tensor.
template <class T>
ForecastDistribution to_distribution(const ad::Tensor<T>& probs, int i, int lead_idx);

extern template ForecastDistribution to_distribution(const ad::Tensor<float>&, int, int);
extern template ForecastDistribution to_distribution(const ad::Tensor<double>&, int, int);

}  // namespace nwc
