#include <benchmark/benchmark.h>

#include <map>

#include "nwc/config.hpp"
#include "nwc/grid.hpp"
#include "nwc/loss.hpp"
#include "nwc/model.hpp"
#include "nwc/rng.hpp"
#include "nwc/tensor.hpp"
#include "nwc/world.hpp"

using namespace nwc;

namespace {

template <class T>
ad::Tensor<T> random_tensor(ad::Shape shape, std::uint64_t seed, bool grad) {
  Rng rng(seed);
  std::vector<T> v(ad::numel(shape));
  for (auto& x : v) x = static_cast<T>(rng.uniform(-1.0, 1.0));
  return ad::Tensor<T>::from(std::move(shape), std::move(v), grad);
}

// 3x3 conv at the desk decoder width, forward only and forward + backward
void BM_Conv3x3(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const bool grad = state.range(1) != 0;
  auto x = random_tensor<float>({8, c, 36, 36}, 1, grad);
  auto w = random_tensor<float>({c, c, 3, 3}, 2, grad);
  auto b = random_tensor<float>({c}, 3, grad);
  ad::Conv2dOptions o;
  o.padding = 1;
  for (auto _ : state) {
    if (grad) {
      x.zero_grad();
      w.zero_grad();
      b.zero_grad();
      ad::backward(ad::sum(ad::conv2d(x, w, b, o)));
    } else {
      ad::NoGradGuard g;
      benchmark::DoNotOptimize(ad::conv2d(x, w, b, o).values().data());
    }
  }
  state.SetItemsProcessed(state.iterations() * 8LL * c * c * 9 * 36 * 36);
}
BENCHMARK(BM_Conv3x3)->Args({16, 0})->Args({16, 1})->Args({32, 0})->Args({32, 1})->Unit(benchmark::kMillisecond);

void BM_DepthwiseDilated(benchmark::State& state) {
  auto x = random_tensor<float>({8, 320, 24, 24}, 4, false);
  auto w = random_tensor<float>({320, 1, 3, 3}, 5, false);
  ad::Conv2dOptions o;
  o.padding = 3;
  o.dilation = 3;
  o.groups = 320;
  ad::NoGradGuard g;
  for (auto _ : state) benchmark::DoNotOptimize(ad::conv2d(x, w, ad::Tensor<float>(), o).values().data());
}
BENCHMARK(BM_DepthwiseDilated)->Unit(benchmark::kMillisecond);

void BM_ResampleRain(benchmark::State& state) {
  Rng rng(6);
  std::vector<float> v(288 * 288);
  for (auto& x : v) x = static_cast<float>(rng.uniform(0.0, 5.0));
  const RasterFrame f(288, 288, 2.0F, 0, v);
  const auto res = static_cast<float>(state.range(0));
  const int size = static_cast<int>(576 / state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(resample_rain(f, res, size).values().data());
}
BENCHMARK(BM_ResampleRain)->Arg(4)->Arg(8);

void BM_WorldStep(benchmark::State& state) {
  auto cfg = preset_config("desk").dataset.world;
  auto s = make_world(cfg, 9);
  for (auto _ : state) {
    s = step_world(s);
    benchmark::DoNotOptimize(&s);
  }
}
BENCHMARK(BM_WorldStep)->Unit(benchmark::kMillisecond);

void BM_DeskForward(benchmark::State& state) {
  const auto cfg = preset_config("desk").model;
  const TauModel<float> model(cfg);
  Rng rng(10);
  std::map<std::string, FieldStack> stacks;
  for (const auto& s : cfg.sources) {
    auto st = FieldStack::zeros(s.timesteps(), s.channels, s.size_px, s.size_px, s.resolution_km);
    st.timestamps_min.assign(static_cast<std::size_t>(st.timesteps), 0);
    for (auto& x : st.values) x = static_cast<float>(rng.uniform(0.0, 3.0));
    stacks.emplace(s.name, std::move(st));
  }
  const ModelInput in = prepare_input(cfg, stacks);
  const int batch = static_cast<int>(state.range(0));
  const std::vector<const ModelInput*> inputs(static_cast<std::size_t>(batch), &in);
  std::vector<int> leads(static_cast<std::size_t>(batch));
  for (int i = 0; i < batch; ++i) leads[static_cast<std::size_t>(i)] = i % cfg.n_lead;
  ad::NoGradGuard g;
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(inputs, leads).values().data());
}
BENCHMARK(BM_DeskForward)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
