#include <doctest.h>

#include <cmath>

#include "nwc/errors.hpp"
#include "nwc/quality.hpp"
#include "support.hpp"

using namespace nwc;

TEST_CASE("streaming mean examples") {
  const auto zero = RasterFrame::filled(3, 3, 2.0F, 0.0F);
  const auto two = RasterFrame::filled(3, 3, 2.0F, 2.0F);
  StreamingMean m;
  m.add(zero);
  m.add(two);
  const auto mean = m.result();
  for (float v : mean.values()) CHECK(v == doctest::Approx(1.0));

  StreamingMean single;
  test::Gen gen(1);
  const auto f = gen.frame(4, 5);
  single.add(f);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 5; ++c) CHECK(single.result().at(r, c) == doctest::Approx(f.at(r, c)));
  }
  StreamingMean mixed;
  mixed.add(zero);
  CHECK_THROWS_AS(mixed.add(RasterFrame::filled(2, 2, 2.0F, 1.0F)), ShapeError);
  CHECK_THROWS(StreamingMean{}.result());
}

TEST_CASE("streaming mean matches a two-pass oracle over 1000 frames") {
  test::Gen gen(17);
  std::vector<RasterFrame> frames;
  for (int i = 0; i < 1000; ++i) frames.push_back(gen.frame(6, 6, 2.0F, 0.0, 50.0));
  StreamingMean m;
  for (const auto& f : frames) m.add(f);
  const auto got = m.result();
  for (int r = 0; r < 6; ++r) {
    for (int c = 0; c < 6; ++c) {
      double s = 0.0;
      for (const auto& f : frames) s += f.at(r, c);
      const double mean = s / 1000.0;
      CHECK(std::abs(got.at(r, c) - mean) <= 1e-6 * mean);
    }
  }
}

TEST_CASE("quality weight examples") {
  const auto uniform = RasterFrame::filled(4, 4, 2.0F, 3.0F);
  const auto qu = quality_weights(uniform);
  for (float w : qu.weights.values()) CHECK(w == doctest::Approx(1.0));

  // median of positive values is 1
  const RasterFrame m(1, 5, 2.0F, 0, {0.0F, 1.0F, 1.0F, 1.0F, 2.0F});
  const auto q = quality_weights(m);
  CHECK(q.weights.at(0, 0) == doctest::Approx(0.1));
  CHECK(q.weights.at(0, 4) == doctest::Approx(1.0));
  CHECK(q.weights.at(0, 1) == doctest::Approx(1.0));

  CHECK_THROWS_AS(quality_weights(RasterFrame::filled(2, 2, 2.0F, 0.0F)), DegenerateInputError);
  CHECK_THROWS_AS(quality_weights(RasterFrame(1, 2, 2.0F, 0, {-1.0F, 1.0F})), InputDomainError);
}

TEST_CASE("quality weight properties on random maps") {
  test::Gen gen(23);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = gen.integer(2, 12);
    auto v = gen.rain(static_cast<std::size_t>(n) * n, gen.real(0.2, 1.0), gen.real(0.1, 10.0));
    v[0] = 1.0F;  // at least one positive pixel
    const RasterFrame m(n, n, 2.0F, 0, v);
    const auto q = quality_weights(m);
    const auto w = q.weights.values();
    for (float x : w) {
      CHECK(x >= 0.1F);
      CHECK(x <= 1.0F);
    }
    // monotone in the mean rate
    for (int i = 0; i < 50; ++i) {
      const auto a = static_cast<std::size_t>(gen.integer(0, n * n - 1));
      const auto b = static_cast<std::size_t>(gen.integer(0, n * n - 1));
      if (v[a] <= v[b]) CHECK(w[a] <= w[b]);
    }
    // scale invariance
    const float c = static_cast<float>(gen.real(0.01, 100.0));
    auto scaled = v;
    for (auto& x : scaled) x *= c;
    const auto qs = quality_weights(RasterFrame(n, n, 2.0F, 0, scaled));
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(qs.weights.values()[i] == doctest::Approx(w[i]).epsilon(1e-5));
  }
}

TEST_CASE("quality crop is periodic") {
  std::vector<float> v(16);
  for (int i = 0; i < 16; ++i) v[std::size_t(i)] = 0.1F + 0.05F * float(i);
  QualityMap q;
  q.weights = RasterFrame(4, 4, 2.0F, 0, v);
  const auto c = q.crop(0, 0, 2);
  CHECK(c == std::vector<float>{v[15], v[12], v[3], v[0]});
}
