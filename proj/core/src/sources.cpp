#include "nwc/sources.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "nwc/errors.hpp"
#include "nwc/rng.hpp"

namespace nwc {

namespace {

bool starts_with(const std::string& s, const char* prefix) { return s.rfind(prefix, 0) == 0; }

int window_px(const SourceSpec& spec, const WorldConfig& world) {
  const double px = spec.extent_km() / world.resolution_km;
  const int rounded = static_cast<int>(std::lround(px));
  if (std::abs(px - rounded) > 1e-6 || rounded > world.domain_px) {
    throw ConfigError("source " + spec.name + " extent does not fit the world grid");
  }
  return rounded;
}

// Window at world resolution, coarsened to the source grid.
std::vector<float> coarsen_window(const std::vector<float>& field, const WorldConfig& world, const SourceSpec& spec,
                                  int cx, int cy) {
  const int extent = window_px(spec, world);
  const auto window = extract_window(field, world.domain_px, cx, cy, extent);
  std::vector<float> out(static_cast<std::size_t>(spec.size_px) * spec.size_px);
  resample_plane(window, extent, extent, world.resolution_km, out, spec.size_px, spec.resolution_km,
                 ResampleMode::AreaAverage);
  return out;
}

std::vector<float> box_blur(const std::vector<float>& in, int n, int radius) {
  std::vector<float> out(in.size());
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      double acc = 0.0;
      int count = 0;
      for (int yy = std::max(0, y - radius); yy <= std::min(n - 1, y + radius); ++yy) {
        for (int xx = std::max(0, x - radius); xx <= std::min(n - 1, x + radius); ++xx) {
          acc += in[static_cast<std::size_t>(yy) * n + xx];
          ++count;
        }
      }
      out[static_cast<std::size_t>(y) * n + x] = static_cast<float>(acc / count);
    }
  }
  return out;
}

std::vector<std::int64_t> frame_times(const SourceSpec& spec, std::int64_t t0) {
  if (spec.timestep_offsets_min.empty()) return {t0};
  std::vector<std::int64_t> out;
  for (int off : spec.timestep_offsets_min) out.push_back(t0 + off);
  return out;
}

}  // namespace

SourceKind source_kind(const std::string& name) {
  if (starts_with(name, "radar")) return SourceKind::Radar;
  if (starts_with(name, "satellite")) return SourceKind::Satellite;
  if (starts_with(name, "gfs_forecast")) return SourceKind::GfsForecast;
  if (starts_with(name, "gfs")) return SourceKind::Gfs;
  if (starts_with(name, "xyz")) return SourceKind::Coordinates;
  if (starts_with(name, "minute")) return SourceKind::Minute;
  throw ConfigError("no rendering rule for source '" + name + "'");
}

std::vector<float> extract_window(const std::vector<float>& field, int n, int cx, int cy, int extent_px) {
  std::vector<float> out(static_cast<std::size_t>(extent_px) * extent_px);
  const int y0 = cy - extent_px / 2;
  const int x0 = cx - extent_px / 2;
  for (int r = 0; r < extent_px; ++r) {
    const int wy = ((y0 + r) % n + n) % n;
    const float* row = field.data() + static_cast<std::size_t>(wy) * n;
    for (int c = 0; c < extent_px; ++c) {
      const int wx = ((x0 + c) % n + n) % n;
      out[static_cast<std::size_t>(r) * extent_px + c] = row[wx];
    }
  }
  return out;
}

FieldStack render_source(const Timeline& timeline, const SourceSpec& spec, std::int64_t t0, int cx, int cy,
                         std::uint64_t noise_seed, const RenderOptions& options) {
  const WorldConfig& world = timeline.config();
  const auto times = frame_times(spec, t0);
  FieldStack out = FieldStack::zeros(static_cast<int>(times.size()), spec.channels, spec.size_px, spec.size_px,
                                     spec.resolution_km);
  out.timestamps_min = times;
  const SourceKind kind = source_kind(spec.name);
  Rng noise(noise_seed);

  for (int t = 0; t < out.timesteps; ++t) {
    const std::int64_t when = times[static_cast<std::size_t>(t)];
    switch (kind) {
      case SourceKind::Radar: {
        const auto v = coarsen_window(timeline.radar_at(when), world, spec, cx, cy);
        for (int c = 0; c < spec.channels; ++c) std::copy(v.begin(), v.end(), out.plane(t, c).begin());
        break;
      }
      case SourceKind::Satellite: {
        // saturating optical-depth style proxies of column rain
        const auto v = coarsen_window(timeline.truth_at(when), world, spec, cx, cy);
        for (int c = 0; c < spec.channels; ++c) {
          const double scale = 0.25 * std::pow(1.5, c);
          auto p = out.plane(t, c);
          for (std::size_t i = 0; i < v.size(); ++i) p[i] = static_cast<float>(1.0 - std::exp(-v[i] / scale));
        }
        break;
      }
      case SourceKind::Gfs: {
        const Snapshot& snap = timeline.at(when);
        const auto v = coarsen_window(snap.truth, world, spec, cx, cy);
        for (int c = 0; c < spec.channels; ++c) {
          auto p = out.plane(t, c);
          if (c == 0 || c == 1) {
            std::fill(p.begin(), p.end(), static_cast<float>((c == 0 ? snap.vx_km : snap.vy_km) / 10.0));
            continue;
          }
          const int j = c - 2;
          const auto blurred = box_blur(v, spec.size_px, 1 + j % 4);
          const int transform = (j / 4) % 3;
          for (std::size_t i = 0; i < blurred.size(); ++i) {
            const double b = blurred[i];
            p[i] = static_cast<float>(transform == 0 ? b : transform == 1 ? std::sqrt(b) : std::log1p(b));
          }
        }
        break;
      }
      case SourceKind::GfsForecast: {
        const auto v = coarsen_window(timeline.at(when).truth, world, spec, cx, cy);
        for (int c = 0; c < spec.channels; ++c) {
          auto p = out.plane(t, c);
          for (std::size_t i = 0; i < v.size(); ++i) {
            const double noisy = v[i] + options.nwp_noise_sigma * noise.normal();
            p[i] = static_cast<float>(std::max(0.0, noisy));
          }
        }
        break;
      }
      case SourceKind::Coordinates: {
        const double domain = world.domain_km();
        for (int r = 0; r < spec.size_px; ++r) {
          for (int col = 0; col < spec.size_px; ++col) {
            const double x_km = cx * static_cast<double>(world.resolution_km) - spec.extent_km() / 2.0 + (col + 0.5) * spec.resolution_km;
            const double y_km = cy * static_cast<double>(world.resolution_km) - spec.extent_km() / 2.0 + (r + 0.5) * spec.resolution_km;
            const double xn = std::fmod(std::fmod(x_km, domain) + domain, domain) / domain;
            const double yn = std::fmod(std::fmod(y_km, domain) + domain, domain) / domain;
            const std::size_t i = static_cast<std::size_t>(r) * spec.size_px + col;
            const double values[3] = {xn, yn,
                                      0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * xn) * std::cos(2.0 * std::numbers::pi * yn)};
            for (int c = 0; c < spec.channels; ++c) out.plane(t, c)[i] = static_cast<float>(values[c % 3]);
          }
        }
        break;
      }
      case SourceKind::Minute: {
        const double minute = static_cast<double>(((when % 1440) + 1440) % 1440);
        for (int c = 0; c < spec.channels; ++c) {
          auto p = out.plane(t, c);
          std::fill(p.begin(), p.end(), static_cast<float>(minute / 1440.0));
        }
        break;
      }
    }
  }
  return out;
}

std::map<std::string, FieldStack> render_sources(const Timeline& timeline, const std::vector<SourceSpec>& specs,
                                                 std::int64_t t0, int cx, int cy, std::uint64_t noise_seed,
                                                 const RenderOptions& options) {
  std::map<std::string, FieldStack> out;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    out.emplace(specs[i].name, render_source(timeline, specs[i], t0, cx, cy, derive_seed(noise_seed, i), options));
  }
  return out;
}

FieldStack render_targets(const Timeline& timeline, const TargetSpec& target, std::int64_t t0, int cx, int cy) {
  SourceSpec as_source{target.name, target.size_px, target.resolution_km, std::nullopt, target.lead_offsets_min, 1};
  const WorldConfig& world = timeline.config();
  FieldStack out = FieldStack::zeros(target.n_lead(), 1, target.size_px, target.size_px, target.resolution_km);
  for (int t = 0; t < target.n_lead(); ++t) {
    const std::int64_t when = t0 + target.lead_offsets_min[static_cast<std::size_t>(t)];
    out.timestamps_min[static_cast<std::size_t>(t)] = when;
    const auto v = coarsen_window(timeline.at(when).radar, world, as_source, cx, cy);
    std::copy(v.begin(), v.end(), out.plane(t, 0).begin());
  }
  return out;
}

}  // namespace nwc
