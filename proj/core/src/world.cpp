#include "nwc/world.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "nwc/errors.hpp"

namespace nwc {

namespace {

int wrap(int i, int n) {
  const int m = i % n;
  return m < 0 ? m + n : m;
}

double wrap_km(double x, double extent) {
  const double m = std::fmod(x, extent);
  return m < 0.0 ? m + extent : m;
}

int poisson(Rng& rng, double lambda) {
  if (lambda <= 0.0) return 0;
  const double limit = std::exp(-lambda);
  int k = 0;
  double p = 1.0;
  do {
    ++k;
    p *= rng.uniform();
  } while (p > limit);
  return k - 1;
}

void draw_velocity(WorldState& s) {
  if (s.config.fixed_velocity_km) {
    s.vx_km = s.config.fixed_velocity_km->first;
    s.vy_km = s.config.fixed_velocity_km->second;
    return;
  }
  const double angle = s.rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double speed = s.rng.uniform(s.config.speed_min_km, s.config.speed_max_km);
  s.vx_km = speed * std::cos(angle);
  s.vy_km = speed * std::sin(angle);
}

RainCell spawn_cell(WorldState& s) {
  const auto& c = s.config;
  RainCell cell;
  cell.x_km = s.rng.uniform(0.0, c.domain_km());
  cell.y_km = s.rng.uniform(0.0, c.domain_km());
  cell.radius_km = s.rng.uniform(c.radius_min_km, c.radius_max_km);
  cell.amplitude_mm_h = s.rng.uniform(c.amplitude_min, c.amplitude_max);
  cell.growth_per_step = s.rng.uniform(c.growth_min, c.growth_max);
  cell.lifetime_steps = c.lifetime_min_steps +
                        static_cast<int>(s.rng.below(static_cast<std::uint64_t>(c.lifetime_max_steps - c.lifetime_min_steps + 1)));
  return cell;
}

std::vector<float> band_limited_noise(Rng& rng, int n, int coarse) {
  std::vector<double> grid(static_cast<std::size_t>(coarse) * coarse);
  for (auto& g : grid) g = rng.normal();
  std::vector<float> out(static_cast<std::size_t>(n) * n);
  const double scale = static_cast<double>(coarse) / n;
  for (int y = 0; y < n; ++y) {
    const double v = (y + 0.5) * scale - 0.5;
    const int y0 = static_cast<int>(std::floor(v));
    const double fy = v - y0;
    for (int x = 0; x < n; ++x) {
      const double u = (x + 0.5) * scale - 0.5;
      const int x0 = static_cast<int>(std::floor(u));
      const double fx = u - x0;
      auto g = [&](int yy, int xx) { return grid[static_cast<std::size_t>(wrap(yy, coarse)) * coarse + wrap(xx, coarse)]; };
      const double val = (1 - fy) * ((1 - fx) * g(y0, x0) + fx * g(y0, x0 + 1)) +
                         fy * ((1 - fx) * g(y0 + 1, x0) + fx * g(y0 + 1, x0 + 1));
      out[static_cast<std::size_t>(y) * n + x] = static_cast<float>(val);
    }
  }
  return out;
}

}  // namespace

std::vector<float> render_cells(const WorldConfig& config, const std::vector<RainCell>& cells) {
  const int n = config.domain_px;
  const double res = config.resolution_km;
  std::vector<double> acc(static_cast<std::size_t>(n) * n, 0.0);
  for (const auto& cell : cells) {
    const double reach = 3.5 * cell.radius_km;
    const int x_lo = static_cast<int>(std::floor((cell.x_km - reach) / res));
    const int x_hi = static_cast<int>(std::ceil((cell.x_km + reach) / res));
    const int y_lo = static_cast<int>(std::floor((cell.y_km - reach) / res));
    const int y_hi = static_cast<int>(std::ceil((cell.y_km + reach) / res));
    const double inv = 1.0 / (2.0 * cell.radius_km * cell.radius_km);
    for (int y = y_lo; y <= y_hi; ++y) {
      const double dy = (y + 0.5) * res - cell.y_km;
      double* row = acc.data() + static_cast<std::size_t>(wrap(y, n)) * n;
      for (int x = x_lo; x <= x_hi; ++x) {
        const double dx = (x + 0.5) * res - cell.x_km;
        const double d2 = dx * dx + dy * dy;
        if (d2 > reach * reach) continue;
        row[wrap(x, n)] += cell.amplitude_mm_h * std::exp(-d2 * inv);
      }
    }
  }
  return {acc.begin(), acc.end()};
}

std::vector<float> warp_periodic(const std::vector<float>& field, int n, double dx_px, double dy_px) {
  const int ix = static_cast<int>(std::floor(dx_px));
  const int iy = static_cast<int>(std::floor(dy_px));
  const double fx = dx_px - ix;
  const double fy = dy_px - iy;
  std::vector<float> out(field.size());
  auto at = [&](int y, int x) { return static_cast<double>(field[static_cast<std::size_t>(wrap(y, n)) * n + wrap(x, n)]); };
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      // sample at (y - dy, x - dx)
      const double v = (1 - fy) * ((1 - fx) * at(y - iy, x - ix) + fx * at(y - iy, x - ix - 1)) +
                       fy * ((1 - fx) * at(y - iy - 1, x - ix) + fx * at(y - iy - 1, x - ix - 1));
      out[static_cast<std::size_t>(y) * n + x] = static_cast<float>(v);
    }
  }
  return out;
}

std::vector<float> radar_bias_field(const WorldConfig& config) {
  const int n = config.domain_px;
  std::vector<float> out(static_cast<std::size_t>(n) * n, 1.0F);
  if (!config.radar_bias) return out;
  const double extent = config.domain_km();
  const double towers[3][2] = {{0.30, 0.35}, {0.72, 0.40}, {0.48, 0.78}};
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const double px = (x + 0.5) * config.resolution_km;
      const double py = (y + 0.5) * config.resolution_km;
      double nearest = extent;
      for (const auto& t : towers) {
        double dx = std::abs(px - t[0] * extent);
        double dy = std::abs(py - t[1] * extent);
        dx = std::min(dx, extent - dx);
        dy = std::min(dy, extent - dy);
        nearest = std::min(nearest, std::hypot(dx, dy));
      }
      // under-measurement close to the towers and at long range
      const double near_loss = 0.45 * std::exp(-(nearest / 18.0) * (nearest / 18.0));
      const double s = std::clamp((nearest - 110.0) / 140.0, 0.0, 1.0);
      const double far_loss = 0.5 * s * s * (3.0 - 2.0 * s);
      out[static_cast<std::size_t>(y) * n + x] = static_cast<float>((1.0 - near_loss) * (1.0 - far_loss));
    }
  }
  return out;
}

void refresh_rain_field(WorldState& s) {
  auto cells = render_cells(s.config, s.cells);
  s.rain_field.resize(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const float r = s.residual.empty() ? 0.0F : s.residual[i];
    s.rain_field[i] = std::max(0.0F, cells[i] + r);
  }
}

WorldState make_world(const WorldConfig& config, std::uint64_t seed) {
  if (config.domain_px <= 0 || config.domain_px % config.noise_coarse != 0) {
    throw ConfigError("world domain must be a positive multiple of the noise grid");
  }
  WorldState s;
  s.config = config;
  s.seed = seed;
  s.rng = Rng(seed);
  draw_velocity(s);
  for (int i = 0; i < config.initial_cells; ++i) {
    RainCell cell = spawn_cell(s);
    cell.age_steps = static_cast<int>(s.rng.below(static_cast<std::uint64_t>(cell.lifetime_steps)));
    if (cell.age_steps >= cell.lifetime_steps / 2) cell.growth_per_step = -std::abs(cell.growth_per_step);
    s.cells.push_back(cell);
  }
  s.residual.assign(static_cast<std::size_t>(config.domain_px) * config.domain_px, 0.0F);
  refresh_rain_field(s);
  return s;
}

WorldState step_world(const WorldState& prev) {
  WorldState s = prev;
  const auto& c = s.config;
  const double extent = c.domain_km();
  s.step += 1;
  if (c.regime_steps > 0 && s.step % c.regime_steps == 0) draw_velocity(s);

  std::vector<RainCell> alive;
  alive.reserve(s.cells.size());
  for (RainCell cell : s.cells) {
    cell.x_km = wrap_km(cell.x_km + s.vx_km, extent);
    cell.y_km = wrap_km(cell.y_km + s.vy_km, extent);
    cell.amplitude_mm_h *= std::exp(cell.growth_per_step);
    cell.age_steps += 1;
    if (cell.age_steps >= cell.lifetime_steps) continue;
    if (cell.age_steps >= cell.lifetime_steps / 2) cell.growth_per_step = -std::abs(cell.growth_per_step);
    alive.push_back(cell);
  }
  const int births = poisson(s.rng, c.spawn_rate);
  for (int i = 0; i < births; ++i) alive.push_back(spawn_cell(s));
  s.cells = std::move(alive);

  const int n = c.domain_px;
  const bool any_residual = std::any_of(s.residual.begin(), s.residual.end(), [](float v) { return v != 0.0F; });
  if (any_residual) {
    s.residual = warp_periodic(s.residual, n, s.vx_km / c.resolution_km, s.vy_km / c.resolution_km);
    for (auto& v : s.residual) v *= static_cast<float>(c.noise_decay);
  }
  if (c.noise_sigma > 0.0) {
    const auto noise = band_limited_noise(s.rng, n, c.noise_coarse);
    for (std::size_t i = 0; i < noise.size(); ++i) s.residual[i] += static_cast<float>(c.noise_sigma) * noise[i];
  }
  refresh_rain_field(s);
  return s;
}

Timeline::Timeline(const WorldConfig& config, std::uint64_t seed, std::size_t capacity)
    : state_(make_world(config, seed)), bias_(radar_bias_field(config)), capacity_(std::max<std::size_t>(capacity, 1)) {
  ring_.push_back(snapshot());
}

Snapshot Timeline::snapshot() const {
  Snapshot snap;
  snap.t_min = state_.step * kStepMinutes;
  snap.vx_km = state_.vx_km;
  snap.vy_km = state_.vy_km;
  snap.truth = state_.rain_field;
  snap.radar.resize(snap.truth.size());
  for (std::size_t i = 0; i < snap.truth.size(); ++i) snap.radar[i] = snap.truth[i] * bias_[i];
  return snap;
}

void Timeline::advance() {
  state_ = step_world(state_);
  ring_.push_back(snapshot());
  while (ring_.size() > capacity_) ring_.pop_front();
}

const Snapshot& Timeline::at(std::int64_t t_min) const {
  const std::int64_t first = ring_.front().t_min;
  if (t_min % kStepMinutes != 0 || t_min < first || t_min > ring_.back().t_min) {
    throw CoverageError("timeline does not retain t=" + std::to_string(t_min) + " min");
  }
  return ring_[static_cast<std::size_t>((t_min - first) / kStepMinutes)];
}

std::vector<float> Timeline::truth_at(std::int64_t t_min) const {
  const std::int64_t lo = t_min - ((t_min % kStepMinutes) + kStepMinutes) % kStepMinutes;
  if (lo == t_min) return at(t_min).truth;
  const auto& a = at(lo).truth;
  const auto& b = at(lo + kStepMinutes).truth;
  const float w = static_cast<float>(t_min - lo) / kStepMinutes;
  std::vector<float> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = (1.0F - w) * a[i] + w * b[i];
  return out;
}

std::vector<float> Timeline::radar_at(std::int64_t t_min) const {
  const std::int64_t lo = t_min - ((t_min % kStepMinutes) + kStepMinutes) % kStepMinutes;
  if (lo == t_min) return at(t_min).radar;
  const auto& a = at(lo).radar;
  const auto& b = at(lo + kStepMinutes).radar;
  const float w = static_cast<float>(t_min - lo) / kStepMinutes;
  std::vector<float> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = (1.0F - w) * a[i] + w * b[i];
  return out;
}

}  // namespace nwc
