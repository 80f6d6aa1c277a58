#include "nwc/train.hpp"

#include <chrono>
#include <cmath>

#include "nwc/calibrate.hpp"
#include "nwc/errors.hpp"
#include "nwc/loss.hpp"
#include "nwc/rng.hpp"

namespace nwc {

namespace {

constexpr std::uint64_t kBatchSalt = 6;

struct Batch {
  std::vector<const ModelInput*> inputs;
  std::vector<int> leads;
  std::vector<int> targets;
  std::vector<float> quality;
};

void append(Batch& b, const PreparedSample& s, int lead, bool use_quality) {
  b.inputs.push_back(&s.input);
  b.leads.push_back(lead);
  const auto& cls = s.classes.at(static_cast<std::size_t>(lead));
  b.targets.insert(b.targets.end(), cls.begin(), cls.end());
  if (use_quality) {
    b.quality.insert(b.quality.end(), s.quality.begin(), s.quality.end());
  } else {
    b.quality.insert(b.quality.end(), cls.size(), 1.0F);
  }
}

}  // namespace

AdamWConfig TrainConfig::adamw() const {
  AdamWConfig c;
  c.lr = lr;
  c.weight_decay = weight_decay;
  return c;
}

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !(weight_decay >= 0.0)) throw ConfigError("learning rate and weight decay must be non-negative");
  if (batch < 1 || steps_per_epoch < 1 || epochs < 1) throw ConfigError("batch, steps and epochs must be positive");
}

TrainConfig desk_train_config() { return {}; }

TrainConfig canonical_train_config() {
  TrainConfig c;
  c.batch = 28;
  c.steps_per_epoch = 2000;
  return c;
}

PreparedSample prepare_sample(const ModelConfig& config, const Sample& sample, const ClassBinning& binning,
                              const QualityMap* quality) {
  PreparedSample p;
  p.id = sample.id;
  p.input = prepare_input(config, sample.inputs);
  const FieldStack& t = sample.targets;
  if (t.timesteps != config.n_lead || t.height != config.target_size_px || t.width != config.target_size_px) {
    throw ShapeError("sample " + sample.id + " targets do not match the model geometry");
  }
  for (int l = 0; l < t.timesteps; ++l) {
    const auto plane = t.plane(l, 0);
    std::vector<int> cls;
    cls.reserve(plane.size());
    for (float v : plane) cls.push_back(binning.bin(v));
    p.classes.push_back(std::move(cls));
    p.observed.emplace_back(plane.begin(), plane.end());
  }
  if (quality) {
    p.quality = quality->crop(sample.center_x_px, sample.center_y_px, config.target_size_px);
  } else {
    p.quality.assign(t.plane_size(), 1.0F);
  }
  return p;
}

std::string training_log_csv(const std::vector<EpochLog>& log) {
  std::string out = "epoch,step,train_loss,val_loss,wall_seconds\n";
  for (const auto& e : log) {
    out += std::to_string(e.epoch) + ',' + std::to_string(e.step) + ',' + format_number(e.train_loss) + ',' +
           format_number(e.val_loss) + ',' + format_number(std::round(e.wall_seconds * 1000.0) / 1000.0) + '\n';
  }
  return out;
}

int best_epoch_index(const std::vector<double>& val_losses) {
  if (val_losses.empty()) throw ContractError("no validation losses");
  int best = 0;
  for (int i = 1; i < static_cast<int>(val_losses.size()); ++i) {
    if (val_losses[static_cast<std::size_t>(i)] < val_losses[static_cast<std::size_t>(best)]) best = i;
  }
  return best;
}

double validation_loss(const TauModel<float>& model, const std::vector<PreparedSample>& val, const TrainConfig& config) {
  if (val.empty()) throw ConfigError("validation split is empty");
  ad::NoGradGuard no_grad;
  const int n_lead = model.config().n_lead;
  double weighted = 0.0;
  std::size_t pixels = 0;
  for (std::size_t start = 0; start < val.size(); start += static_cast<std::size_t>(config.batch)) {
    Batch b;
    const std::size_t end = std::min(val.size(), start + static_cast<std::size_t>(config.batch));
    for (std::size_t i = start; i < end; ++i) append(b, val[i], static_cast<int>(i % static_cast<std::size_t>(n_lead)), config.quality_weighting);
    const auto probs = model.forward(b.inputs, b.leads);
    const double loss = batch_loss(probs, b.targets, b.quality, config.distance_weighting).item();
    weighted += loss * static_cast<double>(b.targets.size());
    pixels += b.targets.size();
  }
  return weighted / static_cast<double>(pixels);
}

TrainResult train_model(TauModel<float>& model, const std::vector<PreparedSample>& train,
                        const std::vector<PreparedSample>& val, const TrainConfig& config,
                        const std::function<void(const EpochLog&)>& on_epoch) {
  config.validate();
  if (train.empty()) throw ConfigError("training split is empty");
  if (val.empty()) throw ConfigError("validation split is empty");
  const auto start = std::chrono::steady_clock::now();
  const int n_lead = model.config().n_lead;
  Rng rng(derive_seed(config.seed, 0, kBatchSalt));
  AdamW<float> opt(model.parameter_tensors(), config.adamw());
  TrainResult result;
  std::vector<NamedArray> best;
  long step = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    double sum = 0.0;
    for (int s = 0; s < config.steps_per_epoch; ++s, ++step) {
      Batch b;
      for (int i = 0; i < config.batch; ++i) {
        const auto& sample = train[rng.below(train.size())];
        append(b, sample, static_cast<int>(rng.below(static_cast<std::uint64_t>(n_lead))), config.quality_weighting);
      }
      const auto probs = model.forward(b.inputs, b.leads);
      const auto loss = batch_loss(probs, b.targets, b.quality, config.distance_weighting);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw DivergenceError("loss became non-finite at epoch " + std::to_string(epoch) + " step " + std::to_string(step));
      }
      opt.zero_grad();
      ad::backward(loss);
      opt.step();
      sum += value;
    }
    EpochLog e;
    e.epoch = epoch;
    e.step = step;
    e.train_loss = sum / config.steps_per_epoch;
    e.val_loss = validation_loss(model, val, config);
    if (!std::isfinite(e.val_loss)) throw DivergenceError("validation loss became non-finite at epoch " + std::to_string(epoch));
    e.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(e);
    if (epoch == 1 || e.val_loss < result.best_val_loss) {
      result.best_val_loss = e.val_loss;
      result.best_epoch = epoch;
      best = model.to_arrays();
    }
    if (on_epoch) on_epoch(e);
  }
  model.load_arrays(best);
  return result;
}

}  // namespace nwc
