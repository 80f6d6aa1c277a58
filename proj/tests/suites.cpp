#include "suites.hpp"

#include <memory>

#include "nwc/loss.hpp"
#include "support.hpp"

namespace nwc::test {

namespace {

using TD = ad::Tensor<double>;
using Inputs = std::vector<TD>;

// Random linear functional so every output entry gets its own weight.
TD probe(const TD& y, const TD& r) { return ad::sum(ad::mul(y, r)); }

TD constant_like(const TD& y, Gen& gen) { return gen.tensor<double>(y.shape(), -1.0, 1.0, false); }

struct OpCase {
  std::string name;
  Inputs inputs;
  std::function<TD(const Inputs&)> op;
};

GradResult check(const OpCase& c, Gen& gen) {
  TD r;
  {
    ad::NoGradGuard g;
    r = constant_like(c.op(c.inputs), gen);
  }
  const auto res = grad_check(c.inputs, [&](const Inputs& in) { return probe(c.op(in), r); }, gen);
  return {c.name, res.max_rel, res.checked, false};
}

ad::Conv2dOptions conv(int stride, int padding, int dilation, int groups) {
  ad::Conv2dOptions o;
  o.stride = stride;
  o.padding = padding;
  o.dilation = dilation;
  o.groups = groups;
  return o;
}

}  // namespace

ModelConfig tiny_model_config() {
  ModelConfig c;
  c.target_size_px = 8;
  c.target_resolution_km = 2.0F;
  c.classes = 4;
  c.n_lead = 3;
  c.channels = 4;
  c.temporal_modules = 1;
  c.depth = 1;
  c.decoder_margin_px = 1;
  c.temporal_margin_px = 1;
  c.seed = 3;
  // latent 10 px at 4 km, temporal window 8, decoder window 6
  SourceSpec radar;
  radar.name = "radar_2km";
  radar.size_px = 20;
  radar.resolution_km = 2.0F;
  radar.timestep_offsets_min = {-10, 0};
  SourceSpec sat;
  sat.name = "satellite_4km";
  sat.size_px = 10;
  sat.resolution_km = 4.0F;
  sat.timestep_offsets_min = {0};
  sat.channels = 2;
  c.sources = {radar, sat};
  return c;
}

std::map<std::string, FieldStack> random_inputs(const ModelConfig& config, std::uint64_t seed) {
  Gen gen(seed);
  std::map<std::string, FieldStack> out;
  for (const auto& s : config.sources) {
    auto st = FieldStack::zeros(s.timesteps(), s.channels, s.size_px, s.size_px, s.resolution_km);
    st.timestamps_min.assign(static_cast<std::size_t>(st.timesteps), 0);
    for (std::size_t t = 0; t < s.timestep_offsets_min.size(); ++t) st.timestamps_min[t] = s.timestep_offsets_min[t];
    for (auto& v : st.values) v = static_cast<float>(gen.real(0.0, 4.0));
    out.emplace(s.name, std::move(st));
  }
  return out;
}

std::vector<GradResult> run_gradient_suite(std::uint64_t seed) {
  Gen gen(seed);
  std::vector<OpCase> cases;
  auto T = [&gen](ad::Shape s, double lo = -1.0, double hi = 1.0) { return gen.tensor<double>(std::move(s), lo, hi); };

  cases.push_back({"add", {T({2, 3, 4}), T({2, 3, 4})}, [](const Inputs& x) { return ad::add(x[0], x[1]); }});
  cases.push_back({"mul", {T({2, 3, 4}), T({2, 3, 4})}, [](const Inputs& x) { return ad::mul(x[0], x[1]); }});
  cases.push_back({"scale", {T({5, 3})}, [](const Inputs& x) { return ad::scale(x[0], -1.7); }});
  cases.push_back({"leaky_relu", {T({4, 6})}, [](const Inputs& x) { return ad::leaky_relu(x[0]); }});
  cases.push_back({"sigmoid", {T({4, 6}, -3, 3)}, [](const Inputs& x) { return ad::sigmoid(x[0]); }});
  cases.push_back({"log", {T({4, 6}, 0.2, 3.0)}, [](const Inputs& x) { return ad::log(x[0]); }});
  cases.push_back({"sum", {T({3, 7})}, [](const Inputs& x) { return ad::sum(x[0]); }});
  cases.push_back({"mean", {T({3, 7})}, [](const Inputs& x) { return ad::mean(x[0]); }});
  cases.push_back({"matmul", {T({4, 5}), T({5, 3})}, [](const Inputs& x) { return ad::matmul(x[0], x[1]); }});
  cases.push_back({"linear", {T({3, 6}), T({4, 6}), T({4})},
                   [](const Inputs& x) { return ad::linear(x[0], x[1], x[2]); }});
  cases.push_back({"linear_nobias", {T({3, 6}), T({4, 6})},
                   [](const Inputs& x) { return ad::linear(x[0], x[1], TD()); }});
  cases.push_back({"conv2d_3x3_pad1", {T({2, 3, 7, 7}), T({4, 3, 3, 3}), T({4})},
                   [](const Inputs& x) { return ad::conv2d(x[0], x[1], x[2], conv(1, 1, 1, 1)); }});
  cases.push_back({"conv2d_stride2", {T({1, 2, 8, 8}), T({3, 2, 3, 3}), T({3})},
                   [](const Inputs& x) { return ad::conv2d(x[0], x[1], x[2], conv(2, 1, 1, 1)); }});
  cases.push_back({"conv2d_dilated", {T({1, 2, 9, 9}), T({2, 2, 3, 3}), T({2})},
                   [](const Inputs& x) { return ad::conv2d(x[0], x[1], x[2], conv(1, 3, 3, 1)); }});
  cases.push_back({"conv2d_depthwise", {T({2, 4, 6, 6}), T({4, 1, 3, 3}), T({4})},
                   [](const Inputs& x) { return ad::conv2d(x[0], x[1], x[2], conv(1, 1, 1, 4)); }});
  cases.push_back({"conv2d_grouped_1x1", {T({2, 6, 5, 5}), T({6, 3, 1, 1}), T({6})},
                   [](const Inputs& x) { return ad::conv2d(x[0], x[1], x[2], conv(1, 0, 1, 2)); }});
  cases.push_back({"conv2d_nobias", {T({1, 3, 5, 5}), T({2, 3, 3, 3})},
                   [](const Inputs& x) { return ad::conv2d(x[0], x[1], TD(), conv(1, 0, 1, 1)); }});
  cases.push_back({"avg_pool2d", {T({2, 3, 6, 6})}, [](const Inputs& x) { return ad::avg_pool2d(x[0], 2); }});
  cases.push_back({"global_avg_pool", {T({2, 3, 4, 5})}, [](const Inputs& x) { return ad::global_avg_pool(x[0]); }});
  cases.push_back({"upsample_nearest2x", {T({2, 2, 3, 4})},
                   [](const Inputs& x) { return ad::upsample_nearest2x(x[0]); }});
  cases.push_back({"concat_channels", {T({2, 1, 3, 3}), T({2, 3, 3, 3})},
                   [](const Inputs& x) { return ad::concat_channels(std::vector<TD>{x[0], x[1], x[0]}); }});
  cases.push_back({"crop_center", {T({2, 2, 7, 7})}, [](const Inputs& x) { return ad::crop_center(x[0], 3, 5); }});
  cases.push_back({"reshape", {T({2, 3, 4})}, [](const Inputs& x) { return ad::reshape(x[0], {6, 4}); }});
  cases.push_back({"scale_channels", {T({2, 3, 4, 4}), T({2, 3})},
                   [](const Inputs& x) { return ad::scale_channels(x[0], x[1]); }});
  cases.push_back({"softmax_channels", {T({2, 5, 3, 3}, -2, 2)},
                   [](const Inputs& x) { return ad::softmax_channels(x[0]); }});
  {
    auto targets = std::make_shared<std::vector<int>>();
    auto weights = std::make_shared<std::vector<double>>();
    for (int i = 0; i < 2 * 3 * 3; ++i) {
      targets->push_back(gen.integer(0, 3));
      weights->push_back(gen.real(0.1, 2.0));
    }
    cases.push_back({"weighted_nll", {T({2, 4, 3, 3}, -3, 0)},
                     [targets, weights](const Inputs& x) { return ad::weighted_nll<double>(x[0], targets, weights); }});
  }

  std::vector<GradResult> out;
  for (const auto& c : cases) out.push_back(check(c, gen));

  // conv -> pool -> FC -> softmax -> CE, 20 random coordinates per input
  {
    const int n = 2;
    auto targets = std::make_shared<std::vector<int>>();
    auto weights = std::make_shared<std::vector<double>>(n, 1.0);
    for (int i = 0; i < n; ++i) targets->push_back(gen.integer(0, 4));
    Inputs in{T({n, 3, 8, 8}), T({4, 3, 3, 3}, -0.5, 0.5), T({4}), T({5, 16}, -0.5, 0.5), T({5})};
    auto f = [targets, weights](const Inputs& x) {
      auto h = ad::leaky_relu(ad::conv2d(x[0], x[1], x[2], conv(1, 1, 1, 1)));
      h = ad::avg_pool2d(h, 4);
      auto logits = ad::linear(ad::reshape(h, {2, 16}), x[3], x[4]);
      auto p = ad::softmax_channels(ad::reshape(logits, {2, 5, 1, 1}));
      return ad::weighted_nll<double>(ad::log(p), targets, weights);
    };
    const auto res = grad_check(in, f, gen, 20);
    out.push_back({"composite_conv_pool_fc_softmax_ce", res.max_rel, res.checked, true});
  }

  // full model loss on the tiny geometry
  {
    const ModelConfig cfg = tiny_model_config();
    TauModel<double> model(cfg);
    // non-zero biases so every branch carries signal
    for (auto t : model.parameter_tensors()) {
      for (auto& x : t.mutable_values()) x += gen.real(-0.05, 0.05);
    }
    const ModelInput a = prepare_input(cfg, random_inputs(cfg, gen.rng.next_u64()));
    const ModelInput b = prepare_input(cfg, random_inputs(cfg, gen.rng.next_u64()));
    const std::vector<const ModelInput*> batch{&a, &b};
    const std::vector<int> leads{0, 2};
    const std::size_t pix = 2 * static_cast<std::size_t>(cfg.target_size_px) * cfg.target_size_px;
    std::vector<int> targets(pix);
    std::vector<double> quality(pix);
    for (std::size_t i = 0; i < pix; ++i) {
      targets[i] = gen.integer(0, cfg.classes - 1);
      quality[i] = gen.real(0.1, 1.0);
    }
    auto f = [&](const Inputs&) { return batch_loss(model.forward(batch, leads), targets, quality, true); };
    const auto res = grad_check(model.parameter_tensors(), f, gen, 3);
    out.push_back({"composite_model_loss", res.max_rel, res.checked, true});
  }
  return out;
}

}  // namespace nwc::test
