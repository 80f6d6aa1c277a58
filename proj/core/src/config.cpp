#include "nwc/config.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

#include "nwc/calibrate.hpp"
#include "nwc/container.hpp"
#include "nwc/errors.hpp"

namespace nwc {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class N>
N parse_number(const std::string& key, const std::string& text) {
  N v{};
  const auto* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) throw ConfigError("bad value for " + key + ": '" + text + "'");
  return v;
}

float parse_float(const std::string& key, const std::string& text) {
  if (text == "inf") return std::numeric_limits<float>::infinity();
  const float v = parse_number<float>(key, text);
  if (!std::isfinite(v)) throw ConfigError("non-finite value for " + key);
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "1" || text == "true") return true;
  if (text == "0" || text == "false") return false;
  throw ConfigError("bad boolean for " + key + ": '" + text + "'");
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) out.push_back(trim(item));
  return out;
}

std::string fmt(float v) {
  if (std::isinf(v)) return "inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fmt(double v) { return format_number(v); }
std::string fmt(bool v) { return v ? "1" : "0"; }

std::string fmt_ints(const std::vector<int>& v) {
  if (v.empty()) return "none";
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::vector<int> parse_ints(const std::string& key, const std::string& text) {
  if (text == "none") return {};
  std::vector<int> out;
  for (const auto& item : split_list(text)) out.push_back(parse_number<int>(key, item));
  return out;
}

std::string fmt_floats(const std::vector<float>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt(v[i]);
  return out;
}

std::vector<float> parse_floats(const std::string& key, const std::string& text) {
  std::vector<float> out;
  for (const auto& item : split_list(text)) out.push_back(parse_float(key, item));
  if (out.empty()) throw ConfigError("empty list for " + key);
  return out;
}

struct Field {
  std::string key;
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
};

template <class N>
Field int_field(const std::string& key, N& ref) {
  return {key, [&ref] { return std::to_string(ref); }, [&ref, key](const std::string& v) { ref = parse_number<N>(key, v); }};
}

Field float_field(const std::string& key, float& ref) {
  return {key, [&ref] { return fmt(ref); }, [&ref, key](const std::string& v) { ref = parse_float(key, v); }};
}

Field double_field(const std::string& key, double& ref) {
  return {key, [&ref] { return fmt(ref); }, [&ref, key](const std::string& v) {
            ref = parse_number<double>(key, v);
            if (!std::isfinite(ref)) throw ConfigError("non-finite value for " + key);
          }};
}

Field bool_field(const std::string& key, bool& ref) {
  return {key, [&ref] { return fmt(ref); }, [&ref, key](const std::string& v) { ref = parse_bool(key, v); }};
}

std::vector<Field> fields(PipelineConfig& c) {
  std::vector<Field> f;
  DatasetSpec& d = c.dataset;
  f.push_back(int_field("dataset.seed", d.seed));
  f.push_back(int_field("dataset.hours", d.hours));
  f.push_back(int_field("dataset.train_cap", d.train_cap));
  f.push_back(int_field("dataset.val_cap", d.val_cap));
  f.push_back(int_field("dataset.test_cap", d.test_cap));

  f.push_back(int_field("split.cycle_hours", d.schedule.cycle_hours));
  f.push_back(int_field("split.train_hours", d.schedule.train_hours));
  f.push_back(int_field("split.blackout_hours", d.schedule.blackout_hours));
  f.push_back(int_field("split.val_hours", d.schedule.val_hours));
  f.push_back(int_field("split.test_hours", d.schedule.test_hours));

  f.push_back(double_field("importance.epsilon", d.importance.epsilon));
  f.push_back(double_field("importance.f_ref", d.importance.f_ref));
  f.push_back(float_field("importance.rain_threshold_mm_h", d.importance.rain_threshold_mm_h));
  f.push_back(double_field("render.nwp_noise_sigma", d.render.nwp_noise_sigma));

  WorldConfig& w = d.world;
  f.push_back(int_field("world.domain_px", w.domain_px));
  f.push_back(float_field("world.resolution_km", w.resolution_km));
  f.push_back(double_field("world.spawn_rate", w.spawn_rate));
  f.push_back(int_field("world.initial_cells", w.initial_cells));
  f.push_back(double_field("world.radius_min_km", w.radius_min_km));
  f.push_back(double_field("world.radius_max_km", w.radius_max_km));
  f.push_back(double_field("world.amplitude_min", w.amplitude_min));
  f.push_back(double_field("world.amplitude_max", w.amplitude_max));
  f.push_back(double_field("world.growth_min", w.growth_min));
  f.push_back(double_field("world.growth_max", w.growth_max));
  f.push_back(int_field("world.lifetime_min_steps", w.lifetime_min_steps));
  f.push_back(int_field("world.lifetime_max_steps", w.lifetime_max_steps));
  f.push_back(double_field("world.speed_min_km", w.speed_min_km));
  f.push_back(double_field("world.speed_max_km", w.speed_max_km));
  f.push_back(int_field("world.regime_steps", w.regime_steps));
  f.push_back(double_field("world.noise_sigma", w.noise_sigma));
  f.push_back(double_field("world.noise_decay", w.noise_decay));
  f.push_back(int_field("world.noise_coarse", w.noise_coarse));
  f.push_back(bool_field("world.radar_bias", w.radar_bias));
  f.push_back({"world.fixed_velocity_km",
               [&w] {
                 if (!w.fixed_velocity_km) return std::string("none");
                 return fmt(w.fixed_velocity_km->first) + "," + fmt(w.fixed_velocity_km->second);
               },
               [&w](const std::string& v) {
                 if (v == "none") {
                   w.fixed_velocity_km.reset();
                   return;
                 }
                 const auto items = split_list(v);
                 if (items.size() != 2) throw ConfigError("world.fixed_velocity_km needs 'vx,vy' or 'none'");
                 w.fixed_velocity_km = std::make_pair(parse_number<double>("world.fixed_velocity_km", items[0]),
                                                      parse_number<double>("world.fixed_velocity_km", items[1]));
               }});

  for (auto& s : d.sources) {
    const std::string p = "source." + s.name + ".";
    f.push_back(int_field(p + "size_px", s.size_px));
    f.push_back(float_field(p + "resolution_km", s.resolution_km));
    f.push_back({p + "context_km", [&s] { return s.context_km ? fmt(*s.context_km) : std::string("none"); },
                 [&s, p](const std::string& v) {
                   if (v == "none") s.context_km.reset();
                   else s.context_km = parse_float(p + "context_km", v);
                 }});
    f.push_back({p + "offsets_min", [&s] { return fmt_ints(s.timestep_offsets_min); },
                 [&s, p](const std::string& v) { s.timestep_offsets_min = parse_ints(p + "offsets_min", v); }});
    f.push_back(int_field(p + "channels", s.channels));
  }
  f.push_back(int_field("target.size_px", d.target.size_px));
  f.push_back(float_field("target.resolution_km", d.target.resolution_km));
  f.push_back({"target.lead_offsets_min", [&d] { return fmt_ints(d.target.lead_offsets_min); },
               [&d](const std::string& v) { d.target.lead_offsets_min = parse_ints("target.lead_offsets_min", v); }});

  ModelConfig& m = c.model;
  f.push_back(int_field("model.channels", m.channels));
  f.push_back(int_field("model.temporal_modules", m.temporal_modules));
  f.push_back(int_field("model.depth", m.depth));
  f.push_back(int_field("model.decoder_margin_px", m.decoder_margin_px));
  f.push_back(int_field("model.temporal_margin_px", m.temporal_margin_px));
  f.push_back(bool_field("model.temporal_pointwise_full", m.temporal_pointwise_full));
  f.push_back(int_field("model.seed", m.seed));

  TrainConfig& t = c.train;
  f.push_back(double_field("train.lr", t.lr));
  f.push_back(double_field("train.weight_decay", t.weight_decay));
  f.push_back(int_field("train.batch", t.batch));
  f.push_back(int_field("train.steps_per_epoch", t.steps_per_epoch));
  f.push_back(int_field("train.epochs", t.epochs));
  f.push_back(int_field("train.seed", t.seed));
  f.push_back(bool_field("train.distance_weighting", t.distance_weighting));
  f.push_back(bool_field("train.quality_weighting", t.quality_weighting));

  f.push_back({"binning.edges_mm_h", [&c] { return fmt_floats(c.bin_edges); },
               [&c](const std::string& v) { c.bin_edges = parse_floats("binning.edges_mm_h", v); }});
  f.push_back({"eval.rate_thresholds_mm_h", [&c] { return fmt_floats(c.rate_thresholds_mm_h); },
               [&c](const std::string& v) { c.rate_thresholds_mm_h = parse_floats("eval.rate_thresholds_mm_h", v); }});
  f.push_back(float_field("quality.w_min", c.quality_w_min));
  return f;
}

}  // namespace

KeyValues KeyValues::parse(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(n) + ": expected key=value");
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(n) + ": empty key");
    if (kv.has(key)) throw ConfigError("duplicate key " + key);
    kv.entries_[key] = trim(t.substr(eq + 1));
  }
  return kv;
}

KeyValues KeyValues::load(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return parse(std::string(bytes.begin(), bytes.end()));
}

std::string KeyValues::to_text() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + '=' + v + '\n';
  return out;
}

void KeyValues::save(const std::filesystem::path& path) const {
  const std::string text = to_text();
  write_file_bytes(path, std::vector<unsigned char>(text.begin(), text.end()));
}

void KeyValues::set(const std::string& key, const std::string& value) {
  if (key.empty() || key.find('=') != std::string::npos || value.find('\n') != std::string::npos) {
    throw ConfigError("invalid config entry '" + key + "'");
  }
  entries_[key] = value;
}

const std::string& KeyValues::get(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError("missing config key " + key);
  return it->second;
}

void PipelineConfig::sync() {
  model.target_size_px = dataset.target.size_px;
  model.target_resolution_km = dataset.target.resolution_km;
  model.n_lead = dataset.target.n_lead();
  model.sources = dataset.sources;
  model.classes = static_cast<int>(bin_edges.size()) - 1;
}

void PipelineConfig::validate() const {
  dataset.schedule.validate();
  for (const auto& s : dataset.sources) validate_source(s, dataset.target);
  if (dataset.target.n_lead() < 1) throw ConfigError("target needs at least one lead offset");
  if (dataset.hours <= 0 || dataset.train_cap < 0 || dataset.val_cap < 0 || dataset.test_cap < 0) {
    throw ConfigError("dataset hours and caps must be non-negative");
  }
  (void)binning();
  model.validate();
  train.validate();
  if (rate_thresholds_mm_h.empty()) throw ConfigError("no evaluation thresholds");
  if (!(quality_w_min > 0.0F && quality_w_min <= 1.0F)) throw ConfigError("quality.w_min must lie in (0,1]");
}

PipelineConfig preset_config(const std::string& preset) {
  PipelineConfig c;
  const auto binning = ClassBinning::default_edges();
  const auto edges = binning.edges();
  c.bin_edges.assign(edges.begin(), edges.end());
  if (preset == "desk") {
    c.dataset.preset = "desk";
    c.dataset.sources = desk_sources();
    c.dataset.target = desk_target();
    c.model = desk_model_config();
    c.train = desk_train_config();
  } else if (preset == "canonical") {
    c.dataset.preset = "canonical";
    c.dataset.sources = canonical_sources();
    c.dataset.target = canonical_target();
    // large enough for the 1152 km GFS windows
    c.dataset.world.domain_px = 768;
    c.model = canonical_model_config();
    c.train = canonical_train_config();
  } else {
    throw ConfigError("unknown preset '" + preset + "' (expected desk or canonical)");
  }
  c.sync();
  return c;
}

KeyValues to_key_values(const PipelineConfig& config) {
  PipelineConfig copy = config;
  KeyValues kv;
  kv.set("preset", copy.dataset.preset);
  for (const auto& f : fields(copy)) kv.set(f.key, f.get());
  return kv;
}

void apply_overrides(PipelineConfig& config, const KeyValues& overrides) {
  auto fs = fields(config);
  for (const auto& [key, value] : overrides.entries()) {
    if (key == "preset") {
      if (value != config.dataset.preset) throw ConfigError("preset cannot be changed by an override");
      continue;
    }
    bool found = false;
    for (auto& f : fs) {
      if (f.key == key) {
        f.set(value);
        found = true;
        break;
      }
    }
    if (!found) throw ConfigError("unknown config key '" + key + "'");
  }
  config.sync();
}

PipelineConfig from_key_values(const KeyValues& kv) {
  PipelineConfig c = preset_config(kv.has("preset") ? kv.get("preset") : std::string("desk"));
  apply_overrides(c, kv);
  return c;
}

std::string resolved_config_text(const PipelineConfig& config) { return to_key_values(config).to_text(); }

}  // namespace nwc
