#pragma once

// Hand-rolled generators and brute-force oracles shared by the test files.

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "nwc/calibrate.hpp"
#include "nwc/grid.hpp"
#include "nwc/rng.hpp"
#include "nwc/tensor.hpp"

namespace nwc::test {

struct Gen {
  Rng rng;
  explicit Gen(std::uint64_t seed) : rng(seed) {}

  int integer(int lo, int hi) { return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1))); }
  double real(double lo, double hi) { return rng.uniform(lo, hi); }
  bool coin(double p = 0.5) { return rng.bernoulli(p); }

  std::vector<double> reals(std::size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (auto& x : v) x = real(lo, hi);
    return v;
  }

  /// Random point on the simplex, strictly positive.
  std::vector<double> simplex(int k) {
    std::vector<double> p(static_cast<std::size_t>(k));
    double s = 0.0;
    for (auto& x : p) {
      x = -std::log(real(1e-6, 1.0));
      s += x;
    }
    for (auto& x : p) x /= s;
    return p;
  }

  std::vector<bool> mask(std::size_t n, double p) {
    std::vector<bool> m(n);
    for (std::size_t i = 0; i < n; ++i) m[i] = coin(p);
    return m;
  }

  /// Rain-like field: mostly dry, exponential tail.
  std::vector<float> rain(std::size_t n, double wet = 0.4, double scale = 3.0) {
    std::vector<float> v(n, 0.0F);
    for (auto& x : v) {
      if (coin(wet)) x = static_cast<float>(-scale * std::log(real(1e-6, 1.0)));
    }
    return v;
  }

  RasterFrame frame(int h, int w, float res = 2.0F, double lo = 0.0, double hi = 5.0) {
    std::vector<float> v(static_cast<std::size_t>(h) * w);
    for (auto& x : v) x = static_cast<float>(real(lo, hi));
    return RasterFrame(h, w, res, 0, std::move(v));
  }

  template <class T>
  ad::Tensor<T> tensor(ad::Shape shape, double lo = -1.0, double hi = 1.0, bool requires_grad = true) {
    std::vector<T> v(ad::numel(shape));
    for (auto& x : v) x = static_cast<T>(real(lo, hi));
    return ad::Tensor<T>::from(std::move(shape), std::move(v), requires_grad);
  }
};

/// Confusion counts by explicit enumeration of the four cases.
inline ContingencyCounts brute_counts(const std::vector<bool>& forecast, const std::vector<bool>& observed) {
  ContingencyCounts c;
  for (std::size_t i = 0; i < forecast.size(); ++i) {
    const bool f = forecast[i];
    const bool o = observed[i];
    if (f && o) c.hits += 1;
    if (!f && o) c.misses += 1;
    if (f && !o) c.false_alarms += 1;
    if (!f && !o) c.correct_negatives += 1;
  }
  return c;
}

/// Naive mean weighted loss over probs [N,K,H,W], one pixel at a time.
inline double naive_batch_loss(const std::vector<double>& probs, int n, int k, int h, int w,
                               const std::vector<int>& targets, const std::vector<double>& quality,
                               bool distance_weighting) {
  double total = 0.0;
  for (int b = 0; b < n; ++b) {
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const std::size_t pix = (static_cast<std::size_t>(b) * h + r) * w + c;
        int kp = 0;
        double best = -1.0;
        for (int j = 0; j < k; ++j) {
          const double p = probs[((static_cast<std::size_t>(b) * k + j) * h + r) * w + c];
          if (p > best) {
            best = p;
            kp = j;
          }
        }
        const int kt = targets[pix];
        const double pt = probs[((static_cast<std::size_t>(b) * k + kt) * h + r) * w + c];
        const double dist = distance_weighting ? 1.0 + std::abs(kt - kp) : 1.0;
        total += quality[pix] * dist * -std::log(std::max(pt, 1e-12));
      }
    }
  }
  return total / (static_cast<double>(n) * h * w);
}

struct GradCheck {
  double max_rel = 0.0;
  int checked = 0;
};

/// Central differences on up to `coords` entries of each input. f builds a
/// scalar loss from the inputs; gradients come from one backward pass.
inline GradCheck grad_check(std::vector<ad::Tensor<double>> inputs,
                            const std::function<ad::Tensor<double>(const std::vector<ad::Tensor<double>>&)>& f,
                            Gen& gen, int coords = 1000, double h = 1e-5) {
  for (auto& x : inputs) x.zero_grad();
  ad::backward(f(inputs));
  std::vector<std::vector<double>> analytic;
  for (const auto& x : inputs) analytic.emplace_back(x.grad().begin(), x.grad().end());

  GradCheck out;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    if (!inputs[t].requires_grad()) continue;
    const std::size_t n = inputs[t].numel();
    std::vector<std::size_t> idx;
    if (n <= static_cast<std::size_t>(coords)) {
      for (std::size_t i = 0; i < n; ++i) idx.push_back(i);
    } else {
      for (int i = 0; i < coords; ++i) idx.push_back(static_cast<std::size_t>(gen.integer(0, static_cast<int>(n) - 1)));
    }
    for (std::size_t i : idx) {
      auto v = inputs[t].mutable_values();
      const double x0 = v[i];
      double fp = 0.0;
      double fm = 0.0;
      {
        ad::NoGradGuard g;
        v[i] = x0 + h;
        fp = f(inputs).item();
        v[i] = x0 - h;
        fm = f(inputs).item();
        v[i] = x0;
      }
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[t][i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
      out.max_rel = std::max(out.max_rel, rel);
      ++out.checked;
    }
  }
  return out;
}

}  // namespace nwc::test
