#include "nwc/dataset.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "nwc/container.hpp"
#include "nwc/errors.hpp"
#include "nwc/hash.hpp"

namespace nwc {

namespace {

constexpr std::uint64_t kSaltPatch = 1;
constexpr std::uint64_t kSaltVal = 2;
constexpr std::uint64_t kSaltKeep = 3;
constexpr std::uint64_t kSaltNoise = 4;

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string window_id(std::int64_t t0_min) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "w%07" PRId64, t0_min / Timeline::kStepMinutes);
  return buf;
}

}  // namespace

void SplitSchedule::validate() const {
  if (train_hours <= 0 || val_hours <= 0 || test_hours <= 0 || blackout_hours < 0) {
    throw ConfigError("split segments must be positive");
  }
  if (train_hours + blackout_hours + val_hours + blackout_hours + test_hours != cycle_hours) {
    throw ConfigError("split segments plus blackouts must sum to the cycle length");
  }
}

Split assign_split(std::int64_t t_min, const SplitSchedule& s) {
  const std::int64_t cycle = s.cycle_min();
  const std::int64_t m = ((t_min % cycle) + cycle) % cycle;
  std::int64_t edge = std::int64_t{s.train_hours} * 60;
  if (m < edge) return Split::Train;
  edge += std::int64_t{s.blackout_hours} * 60;
  if (m < edge) return Split::Blackout;
  edge += std::int64_t{s.val_hours} * 60;
  if (m < edge) return Split::Val;
  edge += std::int64_t{s.blackout_hours} * 60;
  if (m < edge) return Split::Blackout;
  return Split::Test;
}

double ImportanceSampling::keep_probability(double f) const {
  return std::min(1.0, epsilon + (1.0 - epsilon) * f / f_ref);
}

double rainy_fraction(const FieldStack& targets, float threshold) {
  if (targets.values.empty()) throw ShapeError("empty target stack");
  std::size_t rainy = 0;
  for (float v : targets.values) rainy += v >= threshold ? 1U : 0U;
  return static_cast<double>(rainy) / static_cast<double>(targets.values.size());
}

bool importance_keep(const Sample& sample, Rng& rng, const ImportanceSampling& params) {
  const double q = params.keep_probability(rainy_fraction(sample.targets, params.rain_threshold_mm_h));
  return rng.uniform() < q;
}

WindowExtent window_extent(const std::vector<SourceSpec>& sources, const TargetSpec& target) {
  WindowExtent e;
  for (const auto& s : sources) {
    for (int off : s.timestep_offsets_min) {
      e.past_min = std::min(e.past_min, off);
      e.future_min = std::max(e.future_min, off);
    }
  }
  for (int off : target.lead_offsets_min) e.future_min = std::max(e.future_min, off);
  return e;
}

Split window_split(std::int64_t t0, const WindowExtent& extent, const SplitSchedule& schedule) {
  const std::int64_t start = t0 + extent.past_min;
  const std::int64_t end = t0 + extent.future_min;
  if (start < 0) return Split::Blackout;
  const Split split = assign_split(start, schedule);
  if (split == Split::Blackout) return Split::Blackout;
  const std::int64_t cycle = schedule.cycle_min();
  if (start / cycle != end / cycle || assign_split(end, schedule) != split) return Split::Blackout;
  if (split == Split::Train && start >= cycle && start % cycle < std::int64_t{schedule.blackout_hours} * 60) {
    return Split::Blackout;
  }
  return split;
}

std::string Manifest::split_hash(Split split) const {
  Fnv1a h;
  for (const auto& e : entries) {
    if (e.split != split) continue;
    h.update(e.id);
    h.update(":");
    h.update(e.content_hash);
    h.update("\n");
  }
  return hex64(h.digest());
}

std::vector<const ManifestEntry*> Manifest::of_split(Split split) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries) {
    if (e.split == split) out.push_back(&e);
  }
  return out;
}

std::string Manifest::to_text() const {
  std::ostringstream out;
  out << "# nwc-manifest 1\n";
  out << "# preset " << preset << "\n";
  out << "# seed " << seed << "\n";
  out << "# hours " << hours << "\n";
  out << "# counts train=" << train_count << " val=" << val_count << " test=" << test_count << "\n";
  out << "# reference_counts train=" << kReferenceTrainCount << " val=" << kReferenceValCount
      << " test=" << kReferenceTestCount << "\n";
  out << "# train_stream windows=" << train_stream_windows << " mean_rain_fraction=" << fixed6(train_stream_rain_fraction)
      << " kept_mean_rain_fraction=" << fixed6(train_kept_rain_fraction) << "\n";
  out << "# split_hash train=" << split_hash(Split::Train) << " val=" << split_hash(Split::Val)
      << " test=" << split_hash(Split::Test) << "\n";
  for (const auto& e : entries) {
    std::string paths;
    for (std::size_t i = 0; i < e.paths.size(); ++i) paths += (i ? "," : "") + e.paths[i];
    out << e.id << '\t' << split_name(e.split) << '\t' << e.t0_min << '\t' << e.center_x_px << '\t' << e.center_y_px
        << '\t' << join_ints(e.leads_min) << '\t' << paths << '\t' << e.content_hash << "\n";
  }
  return out.str();
}

Manifest Manifest::parse(const std::string& text) {
  Manifest m;
  std::istringstream in(text);
  std::string line;
  auto kv = [](const std::string& token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) throw FormatError("manifest header token without '=': " + token);
    return std::pair{token.substr(0, eq), token.substr(eq + 1)};
  };
  bool saw_magic = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream hs(line.substr(1));
      std::string key;
      hs >> key;
      if (key == "nwc-manifest") {
        saw_magic = true;
      } else if (key == "preset") {
        hs >> m.preset;
      } else if (key == "seed") {
        hs >> m.seed;
      } else if (key == "hours") {
        hs >> m.hours;
      } else if (key == "counts") {
        std::string tok;
        while (hs >> tok) {
          auto [k, v] = kv(tok);
          (k == "train" ? m.train_count : k == "val" ? m.val_count : m.test_count) = std::stoi(v);
        }
      } else if (key == "train_stream") {
        std::string tok;
        while (hs >> tok) {
          auto [k, v] = kv(tok);
          if (k == "windows") m.train_stream_windows = std::stoi(v);
          if (k == "mean_rain_fraction") m.train_stream_rain_fraction = std::stod(v);
          if (k == "kept_mean_rain_fraction") m.train_kept_rain_fraction = std::stod(v);
        }
      }
      continue;
    }
    const auto fields = split_on(line, '\t');
    if (fields.size() != 8) throw FormatError("manifest row needs 8 fields: " + line);
    ManifestEntry e;
    e.id = fields[0];
    e.split = parse_split(fields[1]);
    e.t0_min = std::stoll(fields[2]);
    e.center_x_px = std::stoi(fields[3]);
    e.center_y_px = std::stoi(fields[4]);
    for (const auto& v : split_on(fields[5], ',')) e.leads_min.push_back(std::stoi(v));
    e.paths = split_on(fields[6], ',');
    e.content_hash = fields[7];
    m.entries.push_back(std::move(e));
  }
  if (!saw_magic) throw FormatError("not a manifest (missing header)");
  return m;
}

Manifest Manifest::load(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return parse(std::string(bytes.begin(), bytes.end()));
}

Manifest build_dataset(const DatasetSpec& spec, const std::filesystem::path& out_dir) {
  spec.schedule.validate();
  if (spec.hours <= 0) throw ConfigError("timeline hours must be positive");
  for (const auto& s : spec.sources) validate_source(s, spec.target);
  const WindowExtent extent = window_extent(spec.sources, spec.target);
  const std::int64_t total_steps = std::int64_t{spec.hours} * 60 / Timeline::kStepMinutes;
  const std::int64_t step = Timeline::kStepMinutes;

  // eligibility is a pure function of the schedule, so selection of val/test
  // windows happens before simulating
  std::vector<std::int64_t> val_windows;
  std::vector<std::int64_t> test_windows;
  std::int64_t train_windows = 0;
  for (std::int64_t t0 = -extent.past_min; t0 + extent.future_min <= total_steps * step; t0 += step) {
    switch (window_split(t0, extent, spec.schedule)) {
      case Split::Train: ++train_windows; break;
      case Split::Val: val_windows.push_back(t0); break;
      case Split::Test: test_windows.push_back(t0); break;
      case Split::Blackout: break;
    }
  }
  if (train_windows == 0 || val_windows.empty() || test_windows.empty()) {
    throw ConfigError("timeline of " + std::to_string(spec.hours) + " h leaves a split without any window");
  }

  std::vector<std::int64_t> val_pick = val_windows;
  {
    Rng rng(derive_seed(spec.seed, 0, kSaltVal));
    const std::size_t take = std::min<std::size_t>(val_pick.size(), static_cast<std::size_t>(spec.val_cap));
    for (std::size_t i = 0; i < take; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(val_pick.size() - i));
      std::swap(val_pick[i], val_pick[j]);
    }
    val_pick.resize(take);
    std::sort(val_pick.begin(), val_pick.end());
  }
  std::vector<std::int64_t> test_pick;
  if (test_windows.size() <= static_cast<std::size_t>(spec.test_cap)) {
    test_pick = test_windows;
  } else {
    for (int i = 0; i < spec.test_cap; ++i) {
      test_pick.push_back(test_windows[static_cast<std::size_t>(i) * test_windows.size() / static_cast<std::size_t>(spec.test_cap)]);
    }
  }
  auto picked = [](const std::vector<std::int64_t>& v, std::int64_t t) { return std::binary_search(v.begin(), v.end(), t); };

  std::filesystem::create_directories(out_dir);
  Manifest manifest;
  manifest.preset = spec.preset;
  manifest.seed = spec.seed;
  manifest.hours = spec.hours;
  double stream_rain = 0.0;
  double kept_rain = 0.0;

  const auto capacity = static_cast<std::size_t>((extent.future_min - extent.past_min) / step + 2);
  Timeline timeline(spec.world, derive_seed(spec.seed, 0, 0), capacity);
  const int n = spec.world.domain_px;

  for (std::int64_t s = 1; s <= total_steps; ++s) {
    timeline.advance();
    const std::int64_t t0 = s * step - extent.future_min;
    if (t0 + extent.past_min < 0) continue;
    const Split split = window_split(t0, extent, spec.schedule);
    if (split == Split::Blackout) continue;
    const std::uint64_t w = static_cast<std::uint64_t>(t0 / step);
    if (split == Split::Val && !picked(val_pick, t0)) continue;
    if (split == Split::Test && !picked(test_pick, t0)) continue;

    Rng patch(derive_seed(spec.seed, w, kSaltPatch));
    Sample sample;
    sample.id = window_id(t0);
    sample.split = split;
    sample.t0_min = t0;
    sample.center_x_px = static_cast<int>(patch.below(static_cast<std::uint64_t>(n)));
    sample.center_y_px = static_cast<int>(patch.below(static_cast<std::uint64_t>(n)));
    sample.targets = render_targets(timeline, spec.target, t0, sample.center_x_px, sample.center_y_px);

    if (split == Split::Train) {
      const double f = rainy_fraction(sample.targets, spec.importance.rain_threshold_mm_h);
      stream_rain += f;
      manifest.train_stream_windows += 1;
      if (manifest.train_count >= spec.train_cap) continue;
      Rng keep(derive_seed(spec.seed, w, kSaltKeep));
      if (!importance_keep(sample, keep, spec.importance)) continue;
      kept_rain += f;
    }
    sample.inputs = render_sources(timeline, spec.sources, t0, sample.center_x_px, sample.center_y_px,
                                   derive_seed(spec.seed, w, kSaltNoise), spec.render);

    ManifestEntry entry;
    entry.id = sample.id;
    entry.split = split;
    entry.t0_min = t0;
    entry.center_x_px = sample.center_x_px;
    entry.center_y_px = sample.center_y_px;
    entry.leads_min = spec.target.lead_offsets_min;
    Fnv1a hash;
    auto emit = [&](const std::string& name, const FieldStack& stack) {
      const std::string rel = "samples/" + sample.id + "/" + name + ".nwc";
      const auto bytes = encode_nwc1(stack_to_frames(stack));
      write_file_bytes(out_dir / rel, bytes);
      hash.update(bytes);
      entry.paths.push_back(rel);
    };
    for (const auto& src : spec.sources) emit(src.name, sample.inputs.at(src.name));
    emit(spec.target.name, sample.targets);
    entry.content_hash = hex64(hash.digest());
    manifest.entries.push_back(std::move(entry));

    (split == Split::Train ? manifest.train_count : split == Split::Val ? manifest.val_count : manifest.test_count) += 1;
  }
  if (manifest.train_count == 0) throw ConfigError("importance sampling kept no training windows");
  manifest.train_stream_rain_fraction = manifest.train_stream_windows ? stream_rain / manifest.train_stream_windows : 0.0;
  manifest.train_kept_rain_fraction = kept_rain / manifest.train_count;

  const std::string text = manifest.to_text();
  write_file_bytes(out_dir / "manifest.txt", std::vector<unsigned char>(text.begin(), text.end()));
  return manifest;
}

Sample load_sample(const std::filesystem::path& root, const ManifestEntry& entry) {
  Sample s;
  s.id = entry.id;
  s.split = entry.split;
  s.t0_min = entry.t0_min;
  s.center_x_px = entry.center_x_px;
  s.center_y_px = entry.center_y_px;
  if (entry.paths.empty()) throw FormatError("manifest entry " + entry.id + " lists no files");
  for (std::size_t i = 0; i < entry.paths.size(); ++i) {
    const std::filesystem::path rel(entry.paths[i]);
    FieldStack stack = read_stack(root / rel);
    if (i + 1 == entry.paths.size()) {
      s.targets = std::move(stack);
    } else {
      s.inputs.emplace(rel.stem().string(), std::move(stack));
    }
  }
  if (s.targets.timesteps != static_cast<int>(entry.leads_min.size())) {
    throw ShapeError("sample " + entry.id + " target frames do not match its lead list");
  }
  return s;
}

std::int64_t min_cross_split_gap_min(const Manifest& manifest, const WindowExtent& extent) {
  std::int64_t best = std::numeric_limits<std::int64_t>::max();
  const auto& es = manifest.entries;
  for (std::size_t i = 0; i < es.size(); ++i) {
    const std::int64_t a0 = es[i].t0_min + extent.past_min;
    const std::int64_t a1 = es[i].t0_min + extent.future_min;
    for (std::size_t j = i + 1; j < es.size(); ++j) {
      if (es[i].split == es[j].split) continue;
      const std::int64_t b0 = es[j].t0_min + extent.past_min;
      const std::int64_t b1 = es[j].t0_min + extent.future_min;
      const std::int64_t gap = std::max<std::int64_t>({0, b0 - a1, a0 - b1});
      best = std::min(best, gap);
    }
  }
  return best;
}

void stream_radar_frames(const DatasetSpec& spec, int stride_steps, const std::function<void(const RasterFrame&)>& sink) {
  if (stride_steps <= 0) throw ConfigError("stride must be positive");
  Timeline timeline(spec.world, derive_seed(spec.seed, 0, 0), 1);
  const std::int64_t total_steps = std::int64_t{spec.hours} * 60 / Timeline::kStepMinutes;
  const int n = spec.world.domain_px;
  for (std::int64_t s = 0; s <= total_steps; ++s) {
    if (s > 0) timeline.advance();
    if (s % stride_steps != 0) continue;
    const Snapshot& snap = timeline.at(timeline.now_min());
    sink(RasterFrame(n, n, spec.world.resolution_km, snap.t_min, snap.radar));
  }
}

}  // namespace nwc
