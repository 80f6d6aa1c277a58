#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "nwc/errors.hpp"
#include "nwc/model.hpp"
#include "suites.hpp"
#include "support.hpp"

using namespace nwc;
using TF = ad::Tensor<float>;

namespace {

std::size_t expected_parameter_count(const ModelConfig& c) {
  std::size_t n = 0;
  const std::size_t C = static_cast<std::size_t>(c.channels);
  const std::size_t TC = static_cast<std::size_t>(c.time_slices()) * C;
  for (const auto& s : c.sources) n += C * static_cast<std::size_t>(s.channels) * 9 + C;
  n += C * static_cast<std::size_t>(c.n_lead) + C;
  const std::size_t pw_in = c.temporal_pointwise_full ? TC : C;
  n += static_cast<std::size_t>(c.temporal_modules) * (2 * (TC * 9 + TC) + TC * pw_in + TC + TC * TC + TC);
  n += C * TC + C;
  n += C * (C + static_cast<std::size_t>(c.n_lead)) + C;
  for (int l = 0; l < c.depth; ++l) {
    const std::size_t win = static_cast<std::size_t>(c.level_width(l + 1) + c.n_lead);
    const std::size_t wout = static_cast<std::size_t>(c.level_width(l));
    n += wout * win * 9 + wout;
    n += wout * static_cast<std::size_t>(c.skip_channels(l)) * 9 + wout;
  }
  n += static_cast<std::size_t>(c.classes) * static_cast<std::size_t>(c.level_width(0)) + static_cast<std::size_t>(c.classes);
  return n;
}

std::map<std::string, FieldStack> zero_inputs(const ModelConfig& c) {
  std::map<std::string, FieldStack> out;
  for (const auto& s : c.sources) out.emplace(s.name, FieldStack::zeros(s.timesteps(), s.channels, s.size_px, s.size_px, s.resolution_km));
  return out;
}

}  // namespace

TEST_CASE("desk geometry arithmetic") {
  const auto c = desk_model_config();
  CHECK(c.latent_size() == 36);
  CHECK(c.latent_resolution_km() == 8.0F);
  CHECK(c.decoder_window() == 12);
  CHECK(c.temporal_window() == 24);
  CHECK(c.time_slices() == 20);
  CHECK(c.level_width(0) == 8);
  CHECK(c.level_width(1) == 16);
  CHECK(c.level_width(2) == 32);
  CHECK(c.skip_channels(0) == 1);
  CHECK(c.skip_channels(1) == 6);
  CHECK_NOTHROW(canonical_model_config().validate());
  auto bad = c;
  bad.temporal_margin_px = 20;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("desk model") {
  const auto cfg = desk_model_config();
  const TauModel<float> model(cfg);
  const ModelInput in = prepare_input(cfg, test::random_inputs(cfg, 1));
  const std::vector<const ModelInput*> one{&in};

  SUBCASE("radar stack embeds to 10 x 32 channels on the 36 px latent grid") {
    const auto e = model.encode_source(0, one, cfg.latent_size());
    CHECK(e.shape() == ad::Shape{1, 10 * 32, 36, 36});
    // sources at 2, 4 and 8 km land on the same latent grid
    const auto sat = model.encode_source(2, one, cfg.latent_size());
    const auto gfs = model.encode_source(3, one, cfg.latent_size());
    CHECK(sat.dim(2) == 36);
    CHECK(gfs.dim(2) == 36);
    CHECK(model.encode_source(0, one, 24).shape() == ad::Shape{1, 320, 24, 24});
  }
  SUBCASE("forward shape, normalization, purity") {
    const auto p = model.forward(one, {3});
    CHECK(p.shape() == ad::Shape{1, 9, 32, 32});
    for (int i = 0; i < 32 * 32; ++i) {
      double s = 0.0;
      for (int k = 0; k < 9; ++k) s += p.values()[std::size_t(k * 1024 + i)];
      CHECK(std::abs(s - 1.0) < 1e-5);
    }
    const auto q = model.forward(one, {3});
    CHECK(std::equal(p.values().begin(), p.values().end(), q.values().begin()));
    const auto r = model.forward(one, {9});
    double diff = 0.0;
    for (std::size_t i = 0; i < p.numel(); ++i) diff += std::abs(p.values()[i] - r.values()[i]);
    CHECK(diff > 1e-3);
  }
  SUBCASE("zero input stays finite") {
    const ModelInput z = prepare_input(cfg, zero_inputs(cfg));
    const auto p = model.forward({&z}, {0});
    for (float v : p.values()) CHECK(std::isfinite(v));
  }
  SUBCASE("lead order within a batch does not matter") {
    std::vector<const ModelInput*> batch(std::size_t(cfg.n_lead), &in);
    std::vector<int> fwd(std::size_t(cfg.n_lead));
    std::vector<int> rev(std::size_t(cfg.n_lead));
    for (int l = 0; l < cfg.n_lead; ++l) {
      fwd[std::size_t(l)] = l;
      rev[std::size_t(l)] = cfg.n_lead - 1 - l;
    }
    const auto a = model.forward(batch, fwd);
    const auto b = model.forward(batch, rev);
    const std::size_t per = 9 * 32 * 32;
    for (int l = 0; l < cfg.n_lead; ++l) {
      const float* pa = a.values().data() + std::size_t(l) * per;
      const float* pb = b.values().data() + std::size_t(cfg.n_lead - 1 - l) * per;
      CHECK(std::equal(pa, pa + per, pb));
    }
  }
  SUBCASE("parameter count follows the config arithmetic") {
    CHECK(model.parameter_count() == expected_parameter_count(cfg));
    CHECK(TauModel<float>(cfg).parameter_count() == model.parameter_count());
    auto full = cfg;
    full.temporal_pointwise_full = true;
    CHECK(TauModel<float>(full).parameter_count() == expected_parameter_count(full));
  }
}

TEST_CASE("temporal module") {
  const auto cfg = test::tiny_model_config();
  TauModel<double> model(cfg);
  const int tc = cfg.time_slices() * cfg.channels;
  test::Gen gen(4);

  SUBCASE("shape contract") {
    for (int trial = 0; trial < 5; ++trial) {
      const int h = gen.integer(1, 9);
      const int w = gen.integer(1, 9);
      const auto x = gen.tensor<double>({gen.integer(1, 3), tc, h, w}, -1, 1, false);
      CHECK(model.temporal_module(0, x).shape() == x.shape());
    }
  }
  SUBCASE("zero gate weights give a gate of one half") {
    for (auto& v : model.param("tau0.gate.weight").mutable_values()) v = 0.0;
    for (auto& v : model.param("tau0.gate.bias").mutable_values()) v = 0.0;
    const auto x = gen.tensor<double>({2, tc, 6, 6}, -1, 1, false);
    ad::Conv2dOptions dw1;
    dw1.padding = 1;
    dw1.groups = tc;
    ad::Conv2dOptions dw2;
    dw2.padding = 3;
    dw2.dilation = 3;
    dw2.groups = tc;
    ad::Conv2dOptions pw;
    pw.groups = cfg.time_slices();
    auto s = ad::conv2d(x, model.param("tau0.dw1.weight"), model.param("tau0.dw1.bias"), dw1);
    s = ad::conv2d(s, model.param("tau0.dw2.weight"), model.param("tau0.dw2.bias"), dw2);
    s = ad::leaky_relu(ad::conv2d(s, model.param("tau0.pw.weight"), model.param("tau0.pw.bias"), pw));
    const auto y = model.temporal_module(0, x);
    for (std::size_t i = 0; i < y.numel(); ++i) CHECK(y.values()[i] == doctest::Approx(0.5 * s.values()[i] + x.values()[i]).epsilon(1e-12));
  }
  SUBCASE("single pixel input reduces the depthwise taps to their centers") {
    const auto x = gen.tensor<double>({1, tc, 1, 1}, -1, 1, false);
    ad::Conv2dOptions pw;
    pw.groups = cfg.time_slices();
    const auto w1 = model.param("tau0.dw1.weight").values();
    const auto b1 = model.param("tau0.dw1.bias").values();
    const auto w2 = model.param("tau0.dw2.weight").values();
    const auto b2 = model.param("tau0.dw2.bias").values();
    std::vector<double> d(static_cast<std::size_t>(tc));
    for (int c = 0; c < tc; ++c) {
      const double a = w1[std::size_t(c) * 9 + 4] * x.values()[std::size_t(c)] + b1[std::size_t(c)];
      d[std::size_t(c)] = w2[std::size_t(c) * 9 + 4] * a + b2[std::size_t(c)];
    }
    const auto s = ad::leaky_relu(ad::conv2d(ad::Tensor<double>::from({1, tc, 1, 1}, d), model.param("tau0.pw.weight"),
                                             model.param("tau0.pw.bias"), pw));
    const auto gate = ad::sigmoid(ad::linear(ad::reshape(x, {1, tc}), model.param("tau0.gate.weight"), model.param("tau0.gate.bias")));
    const auto y = model.temporal_module(0, x);
    for (int c = 0; c < tc; ++c) {
      const double expect = s.values()[std::size_t(c)] * gate.values()[std::size_t(c)] + x.values()[std::size_t(c)];
      CHECK(y.values()[std::size_t(c)] == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("decoder contract and checkpoints") {
  const auto cfg = test::tiny_model_config();
  TauModel<float> model(cfg);
  const auto latent = TF::zeros({1, cfg.channels, cfg.decoder_window(), cfg.decoder_window()});
  CHECK_THROWS_AS(model.decode(latent, {}, {0}), ContractError);
  CHECK_THROWS_AS(model.forward({}, {}), ContractError);

  const ModelInput in = prepare_input(cfg, test::random_inputs(cfg, 5));
  const auto before = model.forward({&in}, {1});
  const auto path = std::filesystem::temp_directory_path() / "nwc_test_tiny.ckpt";
  model.save(path);
  TauModel<float> other(cfg);
  for (auto t : other.parameter_tensors()) {
    for (auto& v : t.mutable_values()) v = 0.25F;
  }
  other.load(path);
  const auto after = other.forward({&in}, {1});
  CHECK(std::equal(before.values().begin(), before.values().end(), after.values().begin()));

  auto wider = cfg;
  wider.channels = 8;
  TauModel<float> mismatch(wider);
  CHECK_THROWS_AS(mismatch.load(path), FormatError);
  std::filesystem::remove(path);
}

TEST_CASE("prepare_input rejects mismatched stacks") {
  const auto cfg = test::tiny_model_config();
  auto inputs = test::random_inputs(cfg, 2);
  inputs.erase("satellite_4km");
  CHECK_THROWS_AS(prepare_input(cfg, inputs), ShapeError);
  auto wrong = test::random_inputs(cfg, 2);
  wrong.at("radar_2km") = FieldStack::zeros(2, 1, 10, 10, 2.0F);
  CHECK_THROWS_AS(prepare_input(cfg, wrong), ShapeError);
}
