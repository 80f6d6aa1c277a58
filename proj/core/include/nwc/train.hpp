#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "nwc/container.hpp"
#include "nwc/grid.hpp"
#include "nwc/model.hpp"
#include "nwc/optim.hpp"
#include "nwc/quality.hpp"

namespace nwc {

struct TrainConfig {
  double lr = 3e-4;
  double weight_decay = 1e-3;
  int batch = 8;
  int steps_per_epoch = 100;
  int epochs = 50;
  std::uint64_t seed = 11;
  bool distance_weighting = true;
  bool quality_weighting = true;

  AdamWConfig adamw() const;
  void validate() const;
};

TrainConfig desk_train_config();
TrainConfig canonical_train_config();

/// A sample reduced to what training and verification need.
struct PreparedSample {
  std::string id;
  ModelInput input;
  std::vector<std::vector<int>> classes;     ///< per lead, target pixels
  std::vector<std::vector<float>> observed;  ///< per lead, mm/h
  std::vector<float> quality;                ///< target pixels
};

/// quality may be null (uniform weights).
PreparedSample prepare_sample(const ModelConfig& config, const Sample& sample, const ClassBinning& binning,
                              const QualityMap* quality);

struct EpochLog {
  int epoch = 0;
  long step = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double wall_seconds = 0.0;
};

/// Columns epoch, step, train_loss, val_loss, wall_seconds.
std::string training_log_csv(const std::vector<EpochLog>& log);

struct TrainResult {
  std::vector<EpochLog> log;
  int best_epoch = 0;
  double best_val_loss = 0.0;
};

/// Weighted loss over the validation split; sample i is scored at lead i mod N_lead.
double validation_loss(const TauModel<float>& model, const std::vector<PreparedSample>& val, const TrainConfig& config);

/// Trains in place and leaves the model at the epoch with the lowest
/// validation loss.
TrainResult train_model(TauModel<float>& model, const std::vector<PreparedSample>& train,
                        const std::vector<PreparedSample>& val, const TrainConfig& config,
                        const std::function<void(const EpochLog&)>& on_epoch = {});

/// Index of the smallest validation loss; the earliest wins ties.
int best_epoch_index(const std::vector<double>& val_losses);

}  // namespace nwc
