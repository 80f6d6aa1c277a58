#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <vector>

#include "nwc/rng.hpp"

namespace nwc {

/// Gaussian rain cell on the periodic world grid.
struct RainCell {
  double x_km = 0.0;
  double y_km = 0.0;
  double amplitude_mm_h = 1.0;
  double radius_km = 10.0;
  double growth_per_step = 0.0;  ///< log-amplitude change per 10-min step
  int age_steps = 0;
  int lifetime_steps = 1 << 30;
};

struct WorldConfig {
  int domain_px = 384;
  float resolution_km = 2.0F;

  double spawn_rate = 0.5;  ///< expected new cells per step
  int initial_cells = 20;
  double radius_min_km = 8.0;
  double radius_max_km = 22.0;
  double amplitude_min = 0.6;
  double amplitude_max = 3.0;
  double growth_min = 0.01;
  double growth_max = 0.05;
  int lifetime_min_steps = 18;
  int lifetime_max_steps = 60;

  double speed_min_km = 2.0;  ///< per 10-min step
  double speed_max_km = 6.0;
  int regime_steps = 72;
  std::optional<std::pair<double, double>> fixed_velocity_km;

  double noise_sigma = 0.02;
  double noise_decay = 0.8;
  int noise_coarse = 48;

  bool radar_bias = true;

  double domain_km() const { return domain_px * static_cast<double>(resolution_km); }
};

/// Full generator state. Value type: stepping returns a new state.
struct WorldState {
  WorldConfig config;
  std::uint64_t seed = 0;
  std::int64_t step = 0;
  double vx_km = 0.0;
  double vy_km = 0.0;
  std::vector<RainCell> cells;
  std::vector<float> residual;    ///< advected band-limited noise
  std::vector<float> rain_field;  ///< truth, mm/h, >= 0
  Rng rng{0};
};

WorldState make_world(const WorldConfig& config, std::uint64_t seed);

/// Rebuild rain_field from cells + residual (used after manual edits).
void refresh_rain_field(WorldState& state);

WorldState step_world(const WorldState& state);

/// Cell contribution on the periodic grid, without residual.
std::vector<float> render_cells(const WorldConfig& config, const std::vector<RainCell>& cells);

/// Periodic bilinear shift by (dx, dy) pixels: out(x) = in(x - d).
std::vector<float> warp_periodic(const std::vector<float>& field, int n, double dx_px, double dy_px);

/// Multiplicative radar measurement bias (1 = perfect) over the world grid.
std::vector<float> radar_bias_field(const WorldConfig& config);

struct Snapshot {
  std::int64_t t_min = 0;
  double vx_km = 0.0;
  double vy_km = 0.0;
  std::vector<float> truth;
  std::vector<float> radar;  ///< truth x bias
};

/// Rolling window of generator snapshots at 10-minute spacing.
class Timeline {
 public:
  static constexpr int kStepMinutes = 10;

  Timeline(const WorldConfig& config, std::uint64_t seed, std::size_t capacity);

  /// Advance one step and record the new snapshot.
  void advance();
  std::int64_t now_min() const { return ring_.back().t_min; }
  const WorldConfig& config() const { return state_.config; }
  const WorldState& state() const { return state_; }

  /// Snapshot at an exact step time; CoverageError when not retained.
  const Snapshot& at(std::int64_t t_min) const;
  /// Truth field at any time inside the window, linear in time.
  std::vector<float> truth_at(std::int64_t t_min) const;
  std::vector<float> radar_at(std::int64_t t_min) const;

 private:
  Snapshot snapshot() const;

  WorldState state_;
  std::vector<float> bias_;
  std::size_t capacity_;
  std::deque<Snapshot> ring_;
};

}  // namespace nwc
