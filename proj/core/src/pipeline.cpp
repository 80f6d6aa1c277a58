#include "nwc/pipeline.hpp"

#include "nwc/baselines.hpp"
#include "nwc/container.hpp"
#include "nwc/errors.hpp"
#include "nwc/parallel.hpp"
#include "nwc/sources.hpp"

namespace nwc {

namespace {

const FieldStack& stack_of(const Sample& sample, const std::string& name) {
  const auto it = sample.inputs.find(name);
  if (it == sample.inputs.end()) throw ShapeError("sample " + sample.id + " has no source " + name);
  return it->second;
}

RasterFrame frame_at(const Sample& sample, const FieldStack& stack, std::int64_t when) {
  for (int t = 0; t < stack.timesteps; ++t) {
    if (stack.timestamps_min[static_cast<std::size_t>(t)] == when) return stack.frame(t, 0);
  }
  throw CoverageError("sample " + sample.id + " has no frame at t=" + std::to_string(when));
}

RasterFrame radar_frame(const Sample& sample, int offset_min) {
  std::string name;
  int best = 0;
  for (const auto& [n, st] : sample.inputs) {
    if (source_kind(n) != SourceKind::Radar) continue;
    const int res_rank = static_cast<int>(st.resolution_km * 1000.0F);
    if (name.empty() || res_rank < best) {
      name = n;
      best = res_rank;
    }
  }
  if (name.empty()) throw ShapeError("sample " + sample.id + " has no radar source");
  return frame_at(sample, stack_of(sample, name), sample.t0_min + offset_min);
}

int lead_minutes(const TargetSpec& target, int lead_idx) {
  if (lead_idx < 0 || lead_idx >= target.n_lead()) throw IndexError("lead index out of range");
  return target.lead_offsets_min[static_cast<std::size_t>(lead_idx)];
}

}  // namespace

void save_quality(const std::filesystem::path& path, const RasterFrame& mean_map, const QualityMap& quality) {
  std::vector<Nwc1Frame> frames;
  for (const RasterFrame* f : {&mean_map, &quality.weights}) {
    Nwc1Frame nf;
    nf.height = static_cast<std::uint32_t>(f->height());
    nf.width = static_cast<std::uint32_t>(f->width());
    nf.resolution_km = f->resolution_km();
    nf.timestamp_min = f->timestamp_min();
    nf.values.assign(f->values().begin(), f->values().end());
    frames.push_back(std::move(nf));
  }
  write_nwc1(path, frames);
}

QualityMap load_quality(const std::filesystem::path& path, float w_min) {
  const auto frames = read_nwc1(path);
  if (frames.size() != 2 || frames[1].channels != 1) throw FormatError("quality file must hold a mean and a weight frame");
  const auto& f = frames[1];
  QualityMap q;
  q.weights = RasterFrame(static_cast<int>(f.height), static_cast<int>(f.width), f.resolution_km, f.timestamp_min, f.values);
  q.w_min = w_min;
  return q;
}

RasterFrame simulate_mean_map(const DatasetSpec& spec) {
  StreamingMean mean;
  stream_radar_frames(spec, 60 / Timeline::kStepMinutes, [&](const RasterFrame& f) { mean.add(f); });
  return mean.result();
}

std::vector<PreparedSample> prepare_split(const std::filesystem::path& root, const Manifest& manifest, Split split,
                                          const PipelineConfig& config, const QualityMap* quality) {
  const auto entries = manifest.of_split(split);
  const ClassBinning binning = config.binning();
  std::vector<PreparedSample> out(entries.size());
  parallel_for(entries.size(), [&](std::size_t i) {
    out[i] = prepare_sample(config.model, load_sample(root, *entries[i]), binning, quality);
  });
  return out;
}

std::vector<ForecastDistribution> forecast_all_leads(const TauModel<float>& model, const ModelInput& input) {
  ad::NoGradGuard no_grad;
  const int n_lead = model.config().n_lead;
  constexpr int kChunk = 12;
  std::vector<ForecastDistribution> out;
  for (int start = 0; start < n_lead; start += kChunk) {
    const int end = std::min(n_lead, start + kChunk);
    std::vector<const ModelInput*> batch(static_cast<std::size_t>(end - start), &input);
    std::vector<int> leads;
    for (int l = start; l < end; ++l) leads.push_back(l);
    const auto probs = model.forward(batch, leads);
    for (int i = 0; i < end - start; ++i) out.push_back(to_distribution(probs, i, start + i));
  }
  return out;
}

ThresholdTable calibrate_model(const TauModel<float>& model, const std::vector<PreparedSample>& val,
                               const ClassBinning& binning, std::vector<std::string>* warnings) {
  if (val.empty()) throw ConfigError("validation split is empty");
  Calibrator cal(model.config().classes, model.config().n_lead, binning);
  std::vector<std::vector<ForecastDistribution>> dists(val.size());
  parallel_for(val.size(), [&](std::size_t i) { dists[i] = forecast_all_leads(model, val[i].input); });
  for (std::size_t i = 0; i < val.size(); ++i) {
    for (const auto& d : dists[i]) cal.add(d, val[i].observed.at(static_cast<std::size_t>(d.lead_idx)));
  }
  return cal.finish(warnings);
}

RasterFrame latest_radar(const Sample& sample, int offset_min) { return radar_frame(sample, offset_min); }

RasterFrame persistence_forecast(const Sample& sample, const TargetSpec& target, int lead_idx) {
  const RasterFrame last = radar_frame(sample, 0);
  return resample_rain(persistence(last, lead_minutes(target, lead_idx) / Timeline::kStepMinutes), target.resolution_km,
                       target.size_px);
}

RasterFrame advection_forecast(const Sample& sample, const TargetSpec& target, int lead_idx) {
  const RasterFrame prev = radar_frame(sample, -Timeline::kStepMinutes);
  const RasterFrame last = radar_frame(sample, 0);
  const int steps = lead_minutes(target, lead_idx) / Timeline::kStepMinutes;
  return resample_rain(advect_extrapolate(prev, last, steps), target.resolution_km, target.size_px);
}

RasterFrame nwp_forecast(const Sample& sample, const TargetSpec& target, int lead_idx) {
  std::string fc_name;
  for (const auto& [n, st] : sample.inputs) {
    if (source_kind(n) == SourceKind::GfsForecast) fc_name = n;
  }
  if (fc_name.empty()) throw ShapeError("sample " + sample.id + " has no forecast source");
  const FieldStack& fc = stack_of(sample, fc_name);
  const RasterFrame last = radar_frame(sample, 0);
  // analysis frame: latest radar on the forecast grid
  const int analysis_size = static_cast<int>(std::lround(last.extent_w_km() / fc.resolution_km));
  std::vector<RasterFrame> frames{resample(last, fc.resolution_km, analysis_size, ResampleMode::AreaAverage)};
  for (int t = 0; t < fc.timesteps; ++t) frames.push_back(fc.frame(t, 0));
  return interp_nwp(frames, target.resolution_km, target.size_px, sample.t0_min + lead_minutes(target, lead_idx));
}

MetricsTable evaluate_split(const std::filesystem::path& root, const Manifest& manifest, Split split,
                            const PipelineConfig& config, const EvalOptions& options) {
  auto entries = manifest.of_split(split);
  if (options.limit > 0 && entries.size() > options.limit) entries.resize(options.limit);
  if (entries.empty()) throw ConfigError(std::string("the ") + split_name(split) + " split is empty");
  if (options.model && !options.thresholds) throw ContractError("model evaluation needs a threshold table");
  const TargetSpec& target = config.dataset.target;
  const ClassBinning binning = config.binning();
  const auto& thr = config.rate_thresholds_mm_h;

  std::vector<MetricsTable> per(entries.size());
  parallel_for(entries.size(), [&](std::size_t i) {
    const Sample sample = load_sample(root, *entries[i]);
    MetricsTable& m = per[i];
    std::vector<ForecastDistribution> dists;
    Motion motion;
    RasterFrame last;
    if (options.baselines) {
      last = radar_frame(sample, 0);
      motion = estimate_motion(radar_frame(sample, -Timeline::kStepMinutes), last);
    }
    if (options.model) dists = forecast_all_leads(*options.model, prepare_input(options.model->config(), sample.inputs));
    for (int l = 0; l < target.n_lead(); ++l) {
      const int lead_min = target.lead_offsets_min[static_cast<std::size_t>(l)];
      const auto observed = sample.targets.plane(l, 0);
      if (options.model) {
        const RasterFrame f = decode_intensity(dists[static_cast<std::size_t>(l)], *options.thresholds, l, binning,
                                               target.resolution_km);
        m.add("model", lead_min, f.values(), observed, thr);
      }
      if (options.baselines) {
        m.add("persistence", lead_min, persistence_forecast(sample, target, l).values(), observed, thr);
        const int steps = lead_min / Timeline::kStepMinutes;
        const RasterFrame adv = resample_rain(shift_frame(last, motion.dx * steps, motion.dy * steps),
                                              target.resolution_km, target.size_px);
        m.add("advection", lead_min, adv.values(), observed, thr);
        m.add("nwp", lead_min, nwp_forecast(sample, target, l).values(), observed, thr);
      }
      if (options.truth) m.add("truth", lead_min, observed, observed, thr);
    }
  });
  MetricsTable total;
  for (const auto& m : per) total.merge(m);
  return total;
}

}  // namespace nwc
