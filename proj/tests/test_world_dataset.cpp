#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "nwc/dataset.hpp"
#include "nwc/errors.hpp"
#include "nwc/sources.hpp"
#include "nwc/world.hpp"
#include "support.hpp"

using namespace nwc;
namespace fs = std::filesystem;

namespace {

WorldConfig still_world() {
  WorldConfig c;
  c.fixed_velocity_km = std::pair{0.0, 0.0};
  c.noise_sigma = 0.0;
  c.spawn_rate = 0.0;
  c.growth_min = 0.0;
  c.growth_max = 0.0;
  c.lifetime_min_steps = 100000;
  c.lifetime_max_steps = 100000;
  return c;
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("nwc_test_" + name);
  fs::remove_all(p);
  return p;
}

DatasetSpec small_spec() {
  DatasetSpec d;
  d.sources = desk_sources();
  d.target = desk_target();
  d.hours = 200;
  d.train_cap = 4;
  d.val_cap = 3;
  d.test_cap = 3;
  d.seed = 5;
  return d;
}

}  // namespace

TEST_CASE("identity dynamics leave the field unchanged") {
  const auto s0 = make_world(still_world(), 3);
  const auto s1 = step_world(s0);
  REQUIRE(s0.rain_field.size() == s1.rain_field.size());
  for (std::size_t i = 0; i < s0.rain_field.size(); ++i) CHECK(s1.rain_field[i] == doctest::Approx(s0.rain_field[i]).epsilon(1e-5));
}

TEST_CASE("one pixel east per step at 2 km/step") {
  auto cfg = still_world();
  cfg.fixed_velocity_km = std::pair{2.0, 0.0};
  const auto s0 = make_world(cfg, 4);
  const auto s1 = step_world(s0);
  const int n = cfg.domain_px;
  double worst = 0.0;
  for (int y = 0; y < n; ++y) {
    for (int x = 1; x < n; ++x) {
      worst = std::max(worst, std::abs(double(s1.rain_field[std::size_t(y) * n + x]) - s0.rain_field[std::size_t(y) * n + x - 1]));
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("cell growth closed form") {
  auto cfg = still_world();
  cfg.initial_cells = 0;
  auto s = make_world(cfg, 1);
  RainCell cell;
  cell.x_km = 101.0;  // pixel center of column 50
  cell.y_km = 101.0;
  cell.amplitude_mm_h = 2.0;
  cell.growth_per_step = 0.04;
  cell.radius_km = 10.0;
  s.cells = {cell};
  refresh_rain_field(s);
  const auto peak0 = *std::max_element(s.rain_field.begin(), s.rain_field.end());
  CHECK(peak0 == doctest::Approx(2.0).epsilon(1e-5));
  const auto s1 = step_world(s);
  const auto peak1 = *std::max_element(s1.rain_field.begin(), s1.rain_field.end());
  CHECK(peak1 == doctest::Approx(2.0 * std::exp(0.04)).epsilon(1e-5));
}

TEST_CASE("generator is deterministic and non-negative") {
  WorldConfig cfg;
  auto a = make_world(cfg, 9);
  auto b = make_world(cfg, 9);
  for (int i = 0; i < 5; ++i) {
    a = step_world(a);
    b = step_world(b);
  }
  CHECK(a.rain_field == b.rain_field);
  CHECK(std::all_of(a.rain_field.begin(), a.rain_field.end(), [](float v) { return v >= 0.0F && std::isfinite(v); }));
  CHECK_THROWS_AS(make_world([] { WorldConfig c; c.domain_px = 100; return c; }(), 1), ConfigError);
}

TEST_CASE("timeline retention") {
  Timeline tl(WorldConfig{}, 2, 4);
  for (int i = 0; i < 6; ++i) tl.advance();
  CHECK(tl.now_min() == 60);
  CHECK_NOTHROW(tl.at(30));
  CHECK_THROWS_AS(tl.at(20), CoverageError);
  CHECK_THROWS_AS(tl.at(70), CoverageError);
  // midpoint interpolation
  const auto mid = tl.truth_at(35);
  const auto& lo = tl.at(30).truth;
  const auto& hi = tl.at(40).truth;
  for (std::size_t i = 0; i < mid.size(); i += 97) CHECK(mid[i] == doctest::Approx(0.5 * (lo[i] + hi[i])).epsilon(1e-5));
}

TEST_CASE("source rendering") {
  WorldConfig cfg;
  cfg.domain_px = 768;
  Timeline tl(cfg, 7, 60);
  for (int i = 0; i < 54; ++i) tl.advance();
  const std::int64_t t0 = 60;

  SUBCASE("canonical radar stack shape") {
    const auto specs = canonical_sources();
    const auto& radar = *std::find_if(specs.begin(), specs.end(), [](const SourceSpec& s) { return s.name == "radar_2km"; });
    const auto st = render_source(tl, radar, t0 + 30, 100, 200, 1);
    CHECK(st.timesteps == 10);
    CHECK(st.height == 288);
    CHECK(st.width == 288);
    CHECK(st.timestamps_min.front() == t0 - 60);
  }
  SUBCASE("canonical forecast proxy equals the area-averaged future truth") {
    const auto specs = canonical_sources();
    const auto& fc = *std::find_if(specs.begin(), specs.end(), [](const SourceSpec& s) { return s.name == "gfs_forecast_8km"; });
    RenderOptions quiet;
    quiet.nwp_noise_sigma = 0.0;
    const auto st = render_source(tl, fc, 0, 300, 400, 1, quiet);
    CHECK(st.timesteps == 8);
    CHECK(st.height == 144);
    const auto window = extract_window(tl.at(60).truth, cfg.domain_px, 300, 400, 576);
    std::vector<float> oracle(144 * 144);
    resample_plane(window, 576, 576, 2.0F, oracle, 144, 8.0F, ResampleMode::AreaAverage);
    const auto plane = st.plane(0, 0);
    for (std::size_t i = 0; i < oracle.size(); i += 13) CHECK(plane[i] == doctest::Approx(oracle[i]).epsilon(1e-5));
    // with noise, values stay non-negative and differ
    const auto noisy = render_source(tl, fc, 0, 300, 400, 1);
    CHECK(std::all_of(noisy.values.begin(), noisy.values.end(), [](float v) { return v >= 0.0F; }));
    CHECK(noisy.values != st.values);
  }
  SUBCASE("minute field is minute-of-day over 1440") {
    SourceSpec m{"minute_2km", 8, 2.0F, std::nullopt, {}, 1};
    const auto st = render_source(tl, m, 130, 0, 0, 1);
    for (float v : st.values) CHECK(v == doctest::Approx(130.0 / 1440.0));
  }
  SUBCASE("periodic window extraction wraps") {
    std::vector<float> field(16);
    for (int i = 0; i < 16; ++i) field[std::size_t(i)] = float(i);
    const auto w = extract_window(field, 4, 0, 0, 2);
    CHECK(w == std::vector<float>{15, 12, 3, 0});
  }
}

TEST_CASE("split schedule") {
  const SplitSchedule s;
  CHECK(assign_split(0, s) == Split::Train);
  CHECK(assign_split(145 * 60, s) == Split::Blackout);
  CHECK(assign_split(160 * 60, s) == Split::Val);
  CHECK(assign_split(175 * 60, s) == Split::Blackout);
  CHECK(assign_split(190 * 60, s) == Split::Test);
  CHECK(assign_split(200 * 60, s) == Split::Train);
}

TEST_CASE("windows never straddle segments and train keeps a blackout after test") {
  const auto extent = window_extent(desk_sources(), desk_target());
  CHECK(extent.past_min == -90);
  CHECK(extent.future_min == 120);
  const SplitSchedule sched;
  for (std::int64_t t0 = 0; t0 < 3 * sched.cycle_min(); t0 += 10) {
    const Split sp = window_split(t0, extent, sched);
    if (sp == Split::Blackout) continue;
    for (std::int64_t t = t0 + extent.past_min; t <= t0 + extent.future_min; t += 10) CHECK(assign_split(t, sched) == sp);
  }
}

TEST_CASE("importance sampling") {
  const ImportanceSampling p;
  CHECK(p.keep_probability(0.0) == doctest::Approx(0.02));
  CHECK(p.keep_probability(0.05) == doctest::Approx(1.0));
  CHECK(p.keep_probability(0.5) == doctest::Approx(1.0));
  test::Gen gen(2);
  double prev = 0.0;
  for (int i = 0; i <= 100; ++i) {
    const double q = p.keep_probability(i / 1000.0);
    CHECK(q >= prev);
    CHECK(q <= 1.0);
    prev = q;
  }
  Sample wet;
  wet.targets = FieldStack::zeros(2, 1, 4, 4, 2.0F);
  std::fill(wet.targets.values.begin(), wet.targets.values.end(), 3.0F);
  Rng rng(1);
  for (int i = 0; i < 50; ++i) CHECK(importance_keep(wet, rng, p));
}

TEST_CASE("small dataset: caps, determinism, leakage gap") {
  const auto spec = small_spec();
  const auto dir_a = scratch("ds_a");
  const auto dir_b = scratch("ds_b");
  const Manifest a = build_dataset(spec, dir_a);
  const Manifest b = build_dataset(spec, dir_b);
  CHECK(a.to_text() == b.to_text());
  CHECK(a.train_count == 4);
  CHECK(a.val_count == 3);
  CHECK(a.test_count == 3);
  const auto extent = window_extent(spec.sources, spec.target);
  CHECK(min_cross_split_gap_min(a, extent) >= 12 * 60);
  CHECK(Manifest::parse(a.to_text()).to_text() == a.to_text());
  CHECK(Manifest::load(dir_a / "manifest.txt").to_text() == a.to_text());

  const auto* e = a.of_split(Split::Val).front();
  const Sample s = load_sample(dir_a, *e);
  CHECK(s.targets.timesteps == 12);
  CHECK(s.targets.height == 32);
  CHECK(s.inputs.at("radar_2km").timesteps == 10);
  CHECK(s.inputs.size() == spec.sources.size());
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}

TEST_CASE("timeline too short for a split is a config error") {
  auto spec = small_spec();
  spec.hours = 100;
  const auto dir = scratch("ds_short");
  CHECK_THROWS_AS(build_dataset(spec, dir), ConfigError);
  fs::remove_all(dir);
}
