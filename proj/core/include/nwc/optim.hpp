#pragma once

#include <cmath>
#include <vector>

#include "nwc/errors.hpp"
#include "nwc/tensor.hpp"

namespace nwc {

struct AdamWConfig {
  double lr = 3e-4;
  double weight_decay = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// AdamW with decoupled weight decay, applied before the moment update.
template <class T>
class AdamW {
 public:
  AdamW(std::vector<ad::Tensor<T>> params, AdamWConfig config) : params_(std::move(params)), config_(config) {
    for (const auto& p : params_) {
      m_.emplace_back(p.numel(), 0.0);
      v_.emplace_back(p.numel(), 0.0);
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto value = params_[k].mutable_values();
      auto grad = params_[k].grad();
      if (grad.empty()) continue;
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < value.size(); ++i) {
        const double g = grad[i];
        if (!std::isfinite(g)) throw DivergenceError("non-finite gradient");
        double w = value[i];
        w -= config_.lr * config_.weight_decay * w;
        m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
        v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
        w -= config_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
        value[i] = static_cast<T>(w);
      }
    }
  }

  long steps() const { return t_; }

 private:
  std::vector<ad::Tensor<T>> params_;
  AdamWConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  long t_ = 0;
};

}  // namespace nwc
