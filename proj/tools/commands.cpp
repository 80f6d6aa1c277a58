#include "commands.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "nwc/baselines.hpp"
#include "nwc/calibrate.hpp"
#include "nwc/config.hpp"
#include "nwc/container.hpp"
#include "nwc/dataset.hpp"
#include "nwc/errors.hpp"
#include "nwc/image.hpp"
#include "nwc/pipeline.hpp"
#include "nwc/quality.hpp"
#include "nwc/train.hpp"

namespace fs = std::filesystem;

namespace nwc::cli {

namespace {

constexpr const char* kResolvedConfig = "resolved_config.txt";

void write_text(const fs::path& path, const std::string& text) {
  write_file_bytes(path, std::vector<unsigned char>(text.begin(), text.end()));
}

std::string read_text(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

// Options every pipeline command accepts.
struct ConfigFlags {
  std::string preset;
  std::string config_file;
  std::vector<std::string> sets;

  void add_to(CLI::App* cmd, bool with_preset) {
    if (with_preset) cmd->add_option("--preset", preset, "desk or canonical")->check(CLI::IsMember({"desk", "canonical"}));
    cmd->add_option("--config", config_file, "key=value file applied over the base configuration");
    cmd->add_option("--set", sets, "single key=value override (repeatable)");
  }

  /// base: a resolved config file, or the preset when base is empty.
  PipelineConfig resolve(const fs::path& base) const {
    PipelineConfig c;
    if (!base.empty()) {
      c = from_key_values(KeyValues::load(base));
      if (!preset.empty() && preset != c.dataset.preset) throw ConfigError("--preset conflicts with " + base.string());
    } else {
      c = preset_config(preset.empty() ? "desk" : preset);
    }
    if (!config_file.empty()) apply_overrides(c, KeyValues::load(config_file));
    KeyValues kv;
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      kv.set(s.substr(0, eq), s.substr(eq + 1));
    }
    apply_overrides(c, kv);
    return c;
  }
};

void write_resolved(const fs::path& dir, const PipelineConfig& config) {
  config.validate();
  write_text(dir / kResolvedConfig, resolved_config_text(config));
}

template <class V>
void set_if(std::optional<V>& opt, const std::string& key, PipelineConfig& c) {
  if (!opt) return;
  KeyValues kv;
  std::ostringstream os;
  if constexpr (std::is_floating_point_v<V>) {
    kv.set(key, format_number(*opt));
  } else {
    os << *opt;
    kv.set(key, os.str());
  }
  apply_overrides(c, kv);
}

TauModel<float> load_model(const fs::path& model_dir, const PipelineConfig& config) {
  TauModel<float> model(config.model);
  model.load(model_dir / "model.ckpt");
  return model;
}

std::string csv_field(const std::string& line, std::size_t index) {
  std::istringstream in(line);
  std::string item;
  for (std::size_t i = 0; std::getline(in, item, ','); ++i) {
    if (i == index) return item;
  }
  throw FormatError("metrics row has too few columns: " + line);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-source precipitation nowcasting pipeline", "nwc"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "nwc 0.1.0");

  // gen-data
  ConfigFlags gen_flags;
  std::optional<std::uint64_t> gen_seed;
  std::optional<int> gen_hours;
  std::optional<double> gen_scale;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-data", "simulate the synthetic world and write the dataset");
  gen_flags.add_to(gen, true);
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--hours", gen_hours, "timeline length in hours");
  gen->add_option("--scale", gen_scale, "multiplier on the per-split sample caps")->check(CLI::PositiveNumber);
  gen->add_option("--out-dir", gen_out, "dataset directory")->required();

  // quality-map
  ConfigFlags q_flags;
  std::string q_data;
  std::string q_out;
  auto* qmap = app.add_subcommand("quality-map", "long-term mean radar map and per-pixel loss weights");
  q_flags.add_to(qmap, false);
  qmap->add_option("--data", q_data, "dataset directory")->required();
  qmap->add_option("--out-dir", q_out, "output directory")->required();

  // train
  ConfigFlags t_flags;
  std::string t_data;
  std::string t_out;
  std::string t_quality;
  std::optional<int> t_epochs;
  std::optional<int> t_steps;
  std::optional<int> t_batch;
  std::optional<double> t_lr;
  std::optional<double> t_wd;
  std::optional<std::uint64_t> t_seed;
  auto* train = app.add_subcommand("train", "train the model, keeping the best validation checkpoint");
  t_flags.add_to(train, false);
  train->add_option("--data", t_data, "dataset directory")->required();
  train->add_option("--out-dir", t_out, "output directory")->required();
  train->add_option("--quality", t_quality, "quality file from quality-map (default: uniform weights)");
  train->add_option("--epochs", t_epochs);
  train->add_option("--steps-per-epoch", t_steps);
  train->add_option("--batch", t_batch);
  train->add_option("--lr", t_lr);
  train->add_option("--weight-decay", t_wd);
  train->add_option("--seed", t_seed, "batch sampling seed");

  // calibrate
  ConfigFlags c_flags;
  std::string c_data;
  std::string c_model;
  std::string c_out;
  auto* calib = app.add_subcommand("calibrate", "fit per (class, lead) activation thresholds on the validation split");
  c_flags.add_to(calib, false);
  calib->add_option("--data", c_data, "dataset directory")->required();
  calib->add_option("--model-dir", c_model, "train output directory")->required();
  calib->add_option("--out-dir", c_out, "output directory")->required();

  // eval
  ConfigFlags e_flags;
  std::string e_data;
  std::string e_model;
  std::string e_thresholds;
  std::string e_out;
  bool e_truth = false;
  bool e_no_baselines = false;
  std::size_t e_limit = 0;
  auto* eval = app.add_subcommand("eval", "CSI of the model and baselines on the test split");
  e_flags.add_to(eval, false);
  eval->add_option("--data", e_data, "dataset directory")->required();
  eval->add_option("--model-dir", e_model, "train output directory (omit for baselines only)");
  eval->add_option("--thresholds", e_thresholds, "threshold table from calibrate");
  eval->add_option("--out-dir", e_out, "output directory")->required();
  eval->add_flag("--truth", e_truth, "also score the observation as its own forecast");
  eval->add_flag("--no-baselines", e_no_baselines, "skip persistence, advection and nwp");
  eval->add_option("--limit", e_limit, "evaluate at most this many test samples");

  // forecast
  ConfigFlags f_flags;
  std::string f_data;
  std::string f_model;
  std::string f_thresholds;
  std::string f_sample;
  std::string f_out;
  auto* forecast = app.add_subcommand("forecast", "decoded rain-rate forecast for one sample, all leads");
  f_flags.add_to(forecast, false);
  forecast->add_option("--data", f_data, "dataset directory")->required();
  forecast->add_option("--model-dir", f_model, "train output directory")->required();
  forecast->add_option("--thresholds", f_thresholds, "threshold table from calibrate")->required();
  forecast->add_option("--sample", f_sample, "sample id (default: first test sample)");
  forecast->add_option("--out-dir", f_out, "output directory")->required();

  // plot
  std::string p_metrics;
  std::string p_forecast;
  std::string p_out;
  auto* plot = app.add_subcommand("plot", "CSI-vs-lead charts and forecast panel montage");
  plot->add_option("--metrics", p_metrics, "metrics.csv from eval");
  plot->add_option("--forecast-dir", p_forecast, "forecast output directory");
  plot->add_option("--out-dir", p_out, "output directory")->required();

  // show-config
  ConfigFlags s_flags;
  auto* show = app.add_subcommand("show-config", "print the resolved configuration");
  s_flags.add_to(show, true);

  try {
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    if (argv.empty()) argv.push_back("nwc");
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << "nwc 0.1.0\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << e.what() << '\n';
    return 1;
  }

  try {
    if (gen->parsed()) {
      PipelineConfig c = gen_flags.resolve({});
      set_if(gen_seed, "dataset.seed", c);
      set_if(gen_hours, "dataset.hours", c);
      if (gen_scale) {
        auto scaled = [&](int cap) { return std::to_string(static_cast<long>(std::lround(cap * *gen_scale))); };
        KeyValues kv;
        kv.set("dataset.train_cap", scaled(c.dataset.train_cap));
        kv.set("dataset.val_cap", scaled(c.dataset.val_cap));
        kv.set("dataset.test_cap", scaled(c.dataset.test_cap));
        apply_overrides(c, kv);
      }
      c.validate();
      const Manifest m = build_dataset(c.dataset, gen_out);
      write_resolved(gen_out, c);
      out << "wrote " << m.entries.size() << " samples (train " << m.train_count << ", val " << m.val_count << ", test "
          << m.test_count << ") to " << gen_out << '\n';
    } else if (qmap->parsed()) {
      const PipelineConfig c = q_flags.resolve(fs::path(q_data) / kResolvedConfig);
      const RasterFrame mean = simulate_mean_map(c.dataset);
      const QualityMap q = quality_weights(mean, c.quality_w_min);
      save_quality(fs::path(q_out) / "quality.nwc", mean, q);
      float vmax = 0.0F;
      for (float v : mean.values()) vmax = std::max(vmax, v);
      write_file_bytes(fs::path(q_out) / "mean.pgm", encode_pgm(mean, vmax > 0.0F ? vmax : 1.0F));
      write_file_bytes(fs::path(q_out) / "quality.pgm", encode_pgm(q.weights, 1.0F));
      write_resolved(q_out, c);
      out << "wrote quality map to " << q_out << '\n';
    } else if (train->parsed()) {
      PipelineConfig c = t_flags.resolve(fs::path(t_data) / kResolvedConfig);
      set_if(t_epochs, "train.epochs", c);
      set_if(t_steps, "train.steps_per_epoch", c);
      set_if(t_batch, "train.batch", c);
      set_if(t_lr, "train.lr", c);
      set_if(t_wd, "train.weight_decay", c);
      set_if(t_seed, "train.seed", c);
      c.validate();
      const Manifest m = Manifest::load(fs::path(t_data) / "manifest.txt");
      std::optional<QualityMap> q;
      if (!t_quality.empty()) q = load_quality(t_quality, c.quality_w_min);
      const QualityMap* qp = q ? &*q : nullptr;
      const auto train_set = prepare_split(t_data, m, Split::Train, c, qp);
      const auto val_set = prepare_split(t_data, m, Split::Val, c, qp);
      TauModel<float> model(c.model);
      err << "model parameters: " << model.parameter_count() << '\n';
      const fs::path dir(t_out);
      const auto result = train_model(model, train_set, val_set, c.train, [&](const EpochLog& e) {
        err << "epoch " << e.epoch << " train_loss " << e.train_loss << " val_loss " << e.val_loss << " (" << e.wall_seconds
            << " s)\n";
      });
      model.save(dir / "model.ckpt");
      write_text(dir / "train_log.csv", training_log_csv(result.log));
      write_resolved(dir, c);
      out << "best epoch " << result.best_epoch << " val_loss " << format_number(result.best_val_loss) << '\n';
    } else if (calib->parsed()) {
      const PipelineConfig c = c_flags.resolve(fs::path(c_model) / kResolvedConfig);
      const Manifest m = Manifest::load(fs::path(c_data) / "manifest.txt");
      const TauModel<float> model = load_model(c_model, c);
      const auto val_set = prepare_split(c_data, m, Split::Val, c, nullptr);
      std::vector<std::string> warnings;
      const ThresholdTable table = calibrate_model(model, val_set, c.binning(), &warnings);
      for (const auto& w : warnings) err << "warning: " << w << '\n';
      table.save(fs::path(c_out) / "thresholds.txt");
      write_resolved(c_out, c);
      out << "wrote thresholds to " << (fs::path(c_out) / "thresholds.txt").string() << '\n';
    } else if (eval->parsed()) {
      const fs::path base = e_model.empty() ? fs::path(e_data) / kResolvedConfig : fs::path(e_model) / kResolvedConfig;
      const PipelineConfig c = e_flags.resolve(base);
      const Manifest m = Manifest::load(fs::path(e_data) / "manifest.txt");
      std::optional<TauModel<float>> model;
      std::optional<ThresholdTable> table;
      EvalOptions opt;
      if (!e_model.empty()) {
        if (e_thresholds.empty()) throw ConfigError("--model-dir needs --thresholds");
        model.emplace(load_model(e_model, c));
        table = ThresholdTable::load(e_thresholds);
        opt.model = &*model;
        opt.thresholds = &*table;
      }
      opt.baselines = !e_no_baselines;
      opt.truth = e_truth;
      opt.limit = e_limit;
      const MetricsTable metrics = evaluate_split(e_data, m, Split::Test, c, opt);
      write_text(fs::path(e_out) / "metrics.csv", metrics.to_csv());
      write_resolved(e_out, c);
      out << "wrote " << metrics.cells().size() << " metric rows to " << (fs::path(e_out) / "metrics.csv").string() << '\n';
    } else if (forecast->parsed()) {
      const PipelineConfig c = f_flags.resolve(fs::path(f_model) / kResolvedConfig);
      const Manifest m = Manifest::load(fs::path(f_data) / "manifest.txt");
      const ManifestEntry* entry = nullptr;
      for (const auto& e : m.entries) {
        if ((f_sample.empty() && e.split == Split::Test) || e.id == f_sample) {
          entry = &e;
          break;
        }
      }
      if (!entry) throw IndexError(f_sample.empty() ? "dataset has no test sample" : "no sample " + f_sample);
      const Sample sample = load_sample(f_data, *entry);
      const TauModel<float> model = load_model(f_model, c);
      const ThresholdTable table = ThresholdTable::load(f_thresholds);
      const auto dists = forecast_all_leads(model, prepare_input(c.model, sample.inputs));
      const ClassBinning binning = c.binning();
      const fs::path dir(f_out);
      std::vector<Nwc1Frame> frames;
      for (const auto& d : dists) {
        const int lead_min = c.dataset.target.lead_offsets_min[static_cast<std::size_t>(d.lead_idx)];
        const RasterFrame f = decode_intensity(d, table, d.lead_idx, binning, c.dataset.target.resolution_km);
        Nwc1Frame nf;
        nf.height = static_cast<std::uint32_t>(f.height());
        nf.width = static_cast<std::uint32_t>(f.width());
        nf.resolution_km = f.resolution_km();
        nf.timestamp_min = sample.t0_min + lead_min;
        nf.values.assign(f.values().begin(), f.values().end());
        frames.push_back(std::move(nf));
        if (lead_min % 60 == 0) {
          const std::string tag = std::to_string(lead_min);
          write_file_bytes(dir / ("forecast_" + tag + "min.pgm"), encode_pgm(f, 16.0F));
          write_file_bytes(dir / ("observed_" + tag + "min.pgm"), encode_pgm(sample.targets.frame(d.lead_idx, 0), 16.0F));
        }
      }
      write_nwc1(dir / "forecast.nwc", frames);
      write_stack(dir / "observed.nwc", sample.targets);
      write_resolved(dir, c);
      out << "wrote forecast for " << entry->id << " to " << f_out << '\n';
    } else if (plot->parsed()) {
      if (p_metrics.empty() && p_forecast.empty()) throw ConfigError("plot needs --metrics and/or --forecast-dir");
      const fs::path dir(p_out);
      if (!p_metrics.empty()) {
        std::istringstream in(read_text(p_metrics));
        std::string line;
        std::getline(in, line);
        std::map<std::string, std::map<std::string, ChartSeries>> charts;
        while (std::getline(in, line)) {
          if (line.empty()) continue;
          const std::string model = csv_field(line, 0);
          const std::string thr = csv_field(line, 1);
          const double lead = std::stod(csv_field(line, 2));
          const std::string v = csv_field(line, 6);
          const double csi_v = v == "nan" ? std::nan("") : std::stod(v);
          auto& s = charts[thr][model];
          s.name = model;
          s.points.emplace_back(lead, csi_v);
        }
        for (const auto& [thr, by_model] : charts) {
          std::vector<ChartSeries> series;
          for (const auto& [name, s] : by_model) series.push_back(s);
          write_text(dir / ("csi_" + thr + "mm_h.svg"),
                     line_chart_svg("CSI at " + thr + " mm/h", "lead time (min)", "CSI", series));
        }
      }
      if (!p_forecast.empty()) {
        std::vector<RasterFrame> panels;
        const auto forecast_frames = read_nwc1(fs::path(p_forecast) / "forecast.nwc");
        const FieldStack observed = read_stack(fs::path(p_forecast) / "observed.nwc");
        for (std::size_t i = 0; i < forecast_frames.size(); ++i) {
          const auto& f = forecast_frames[i];
          if ((i + 1) % 6 != 0) continue;  // hourly, leads start at 10 min
          panels.emplace_back(static_cast<int>(f.height), static_cast<int>(f.width), f.resolution_km, f.timestamp_min, f.values);
          panels.push_back(observed.frame(static_cast<int>(i), 0));
        }
        if (panels.empty()) throw ContractError("forecast has no hourly lead to plot");
        write_file_bytes(dir / "montage.ppm", encode_ppm_montage(panels, 16.0F));
      }
      out << "wrote plots to " << p_out << '\n';
    } else if (show->parsed()) {
      const PipelineConfig c = s_flags.resolve({});
      c.validate();
      out << resolved_config_text(c);
    }
  } catch (const Error& e) {
    err << "error: " << e.kind() << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace nwc::cli
