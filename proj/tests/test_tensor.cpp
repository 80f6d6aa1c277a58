#include <doctest.h>

#include <cmath>

#include "nwc/errors.hpp"
#include "nwc/optim.hpp"
#include "nwc/tensor.hpp"
#include "suites.hpp"
#include "support.hpp"

using namespace nwc;
using TD = ad::Tensor<double>;
using TF = ad::Tensor<float>;

namespace {

ad::Conv2dOptions opts(int padding, int dilation = 1, int groups = 1) {
  ad::Conv2dOptions o;
  o.padding = padding;
  o.dilation = dilation;
  o.groups = groups;
  return o;
}

}  // namespace

TEST_CASE("1x1 identity convolution") {
  test::Gen gen(1);
  const auto x = gen.tensor<float>({2, 3, 5, 4}, -1, 1, false);
  std::vector<float> eye(9, 0.0F);
  for (int i = 0; i < 3; ++i) eye[std::size_t(i) * 3 + std::size_t(i)] = 1.0F;
  const auto w = TF::from({3, 3, 1, 1}, eye);
  const auto y = ad::conv2d(x, w, TF(), opts(0));
  CHECK(y.shape() == x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.values()[i] == x.values()[i]);
}

TEST_CASE("depthwise all-ones 3x3 on constant input") {
  const auto x = TF::filled({1, 2, 6, 6}, 1.0F);
  const auto w = TF::filled({2, 1, 3, 3}, 1.0F);
  const auto y = ad::conv2d(x, w, TF(), opts(1, 1, 2));
  CHECK(y.dim(2) == 6);
  for (int c = 0; c < 2; ++c) {
    for (int r = 1; r < 5; ++r) {
      for (int col = 1; col < 5; ++col) CHECK(y.values()[std::size_t((c * 6 + r) * 6 + col)] == doctest::Approx(9.0));
    }
  }
  CHECK(y.values()[0] == doctest::Approx(4.0));  // corner sees 2x2 of the window
}

TEST_CASE("dilated impulse response") {
  std::vector<float> xv(11 * 11, 0.0F);
  xv[5 * 11 + 5] = 1.0F;
  const auto x = TF::from({1, 1, 11, 11}, xv);
  std::vector<float> wv(9);
  for (int i = 0; i < 9; ++i) wv[std::size_t(i)] = float(i + 1);
  const auto w = TF::from({1, 1, 3, 3}, wv);
  const auto y = ad::conv2d(x, w, TF(), opts(2, 2));
  REQUIRE(y.dim(2) == 11);
  int nonzero = 0;
  for (int r = 0; r < 11; ++r) {
    for (int c = 0; c < 11; ++c) {
      const float v = y.values()[std::size_t(r * 11 + c)];
      if (v == 0.0F) continue;
      ++nonzero;
      // only the dilated taps, each carrying the flipped kernel entry
      CHECK(std::abs(r - 5) % 2 == 0);
      CHECK(std::abs(c - 5) % 2 == 0);
      CHECK(std::abs(r - 5) <= 2);
      CHECK(std::abs(c - 5) <= 2);
      const int ki = 1 - (r - 5) / 2;
      const int kj = 1 - (c - 5) / 2;
      CHECK(v == wv[std::size_t(ki * 3 + kj)]);
    }
  }
  CHECK(nonzero == 9);
  CHECK(ad::conv_out_size(11, 3, opts(3, 3)) == 11);
}

TEST_CASE("softmax, pooling and reductions") {
  const auto z = TF::filled({1, 9, 2, 2}, 0.37F);
  const auto sm = ad::softmax_channels(z);
  for (float p : sm.values()) CHECK(p == doctest::Approx(1.0 / 9.0));
  const auto c = TF::filled({2, 3, 4, 5}, 2.5F);
  const auto gap = ad::global_avg_pool(c);
  for (float v : gap.values()) CHECK(v == doctest::Approx(2.5));
  CHECK(ad::global_avg_pool(c).shape() == ad::Shape{2, 3});

  test::Gen gen(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = gen.tensor<float>({2, gen.integer(2, 9), 3, 3}, -30, 30, false);
    const auto p = ad::softmax_channels(x);
    for (int b = 0; b < 2; ++b) {
      for (int i = 0; i < 9; ++i) {
        double s = 0.0;
        for (int k = 0; k < x.dim(1); ++k) s += p.values()[std::size_t((b * x.dim(1) + k) * 9 + i)];
        CHECK(std::abs(s - 1.0) < 1e-5);
      }
    }
  }
}

TEST_CASE("backward closed forms") {
  test::Gen gen(2);
  auto x = gen.tensor<double>({3, 4});
  ad::backward(ad::sum(x));
  for (double g : x.grad()) CHECK(g == 1.0);

  auto y = gen.tensor<double>({2, 5});
  ad::backward(ad::sum(ad::mul(y, y)));
  for (std::size_t i = 0; i < y.numel(); ++i) CHECK(y.grad()[i] == doctest::Approx(2.0 * y.values()[i]));

  // shared subexpressions accumulate
  auto z = gen.tensor<double>({4});
  auto s = ad::add(z, z);
  ad::backward(ad::sum(ad::add(s, z)));
  for (double g : z.grad()) CHECK(g == doctest::Approx(3.0));
}

TEST_CASE("backward contract") {
  test::Gen gen(3);
  auto x = gen.tensor<double>({2, 2});
  const auto loss = ad::sum(ad::mul(x, x));
  ad::backward(loss);
  CHECK_THROWS_AS(ad::backward(loss), ContractError);
  CHECK_THROWS_AS(ad::backward(ad::mul(x, x)), ContractError);
  {
    ad::NoGradGuard guard;
    CHECK_FALSE(ad::grad_enabled());
    const auto y = ad::mul(x, x);
    CHECK_FALSE(y.requires_grad());
  }
  CHECK(ad::grad_enabled());
  CHECK_THROWS_AS(ad::add(x, gen.tensor<double>({2, 3})), ShapeError);
  CHECK_THROWS_AS(ad::matmul(x, gen.tensor<double>({3, 3})), ShapeError);
  CHECK_THROWS_AS(ad::conv2d(gen.tensor<double>({1, 3, 4, 4}), gen.tensor<double>({2, 2, 3, 3}), TD(), opts(1)),
                  ShapeError);
}

TEST_CASE("gradient suite") {
  const auto results = test::run_gradient_suite();
  for (const auto& r : results) {
    INFO(r.name, " max rel ", r.max_rel, " over ", r.checked);
    CHECK(r.checked > 0);
    CHECK(r.max_rel < (r.composite ? 1e-3 : 1e-4));
  }
}

TEST_CASE("float and double agree on a conv stack") {
  test::Gen gen(8);
  const auto xd = gen.tensor<double>({2, 4, 9, 9}, -1, 1, false);
  const auto wd = gen.tensor<double>({6, 4, 3, 3}, -0.3, 0.3, false);
  std::vector<float> xf(xd.values().begin(), xd.values().end());
  std::vector<float> wf(wd.values().begin(), wd.values().end());
  const auto yd = ad::conv2d(xd, wd, TD(), opts(1));
  const auto yf = ad::conv2d(TF::from(xd.shape(), xf), TF::from(wd.shape(), wf), TF(), opts(1));
  for (std::size_t i = 0; i < yd.numel(); ++i) CHECK(yf.values()[i] == doctest::Approx(yd.values()[i]).epsilon(1e-5));
}

TEST_CASE("AdamW closed forms") {
  SUBCASE("zero gradient, zero decay") {
    auto p = TD::from({3}, {1.0, -2.0, 0.5}, true);
    AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    AdamW<double> opt({p}, cfg);
    p.mutable_grad();
    opt.step();
    CHECK(p.values()[0] == 1.0);
    CHECK(p.values()[1] == -2.0);
  }
  SUBCASE("first step is lr * g / (|g| + eps)") {
    auto p = TD::from({3}, {1.0, -2.0, 0.5}, true);
    AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    AdamW<double> opt({p}, cfg);
    const double g[3] = {0.3, -4.0, 1e-3};
    for (int i = 0; i < 3; ++i) p.mutable_grad()[std::size_t(i)] = g[i];
    const double before[3] = {1.0, -2.0, 0.5};
    opt.step();
    for (int i = 0; i < 3; ++i) {
      const double expect = before[i] - cfg.lr * g[i] / (std::abs(g[i]) + cfg.eps);
      CHECK(p.values()[std::size_t(i)] == doctest::Approx(expect).epsilon(1e-12));
    }
  }
  SUBCASE("pure decay scales by 1 - lr*wd") {
    auto p = TD::from({2}, {1.0, -3.0}, true);
    AdamWConfig cfg;
    AdamW<double> opt({p}, cfg);
    p.mutable_grad();
    for (int s = 0; s < 5; ++s) opt.step();
    CHECK(p.values()[0] == doctest::Approx(std::pow(1.0 - 3e-7, 5)).epsilon(1e-14));
    CHECK(p.values()[1] == doctest::Approx(-3.0 * std::pow(1.0 - 3e-7, 5)).epsilon(1e-14));
  }
  SUBCASE("non-finite gradient diverges") {
    auto p = TD::from({1}, {1.0}, true);
    AdamW<double> opt({p}, AdamWConfig{});
    p.mutable_grad()[0] = std::nan("");
    CHECK_THROWS_AS(opt.step(), DivergenceError);
  }
}
