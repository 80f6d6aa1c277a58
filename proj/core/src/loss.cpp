#include "nwc/loss.hpp"

#include <cmath>
#include <cstdlib>
#include <memory>

#include "nwc/errors.hpp"

namespace nwc {

double pixel_loss(std::span<const double> probs, int target_class, double quality_w, bool distance_weighting) {
  if (target_class < 0 || target_class >= static_cast<int>(probs.size())) {
    throw IndexError("target class " + std::to_string(target_class) + " out of range");
  }
  const int kp = argmax_class(probs);
  const double distance = distance_weighting ? 1.0 + std::abs(target_class - kp) : 1.0;
  return -quality_w * distance * std::log(std::max(probs[static_cast<std::size_t>(target_class)], kProbFloor));
}

template <class T>
ad::Tensor<T> batch_loss(const ad::Tensor<T>& probs, const std::vector<int>& targets, const std::vector<T>& quality,
                         bool distance_weighting) {
  if (!probs.defined() || probs.rank() != 4) throw ShapeError("batch_loss expects probabilities [N,K,H,W]");
  const int n = probs.dim(0);
  const int k = probs.dim(1);
  const std::size_t hw = static_cast<std::size_t>(probs.dim(2)) * probs.dim(3);
  const std::size_t count = static_cast<std::size_t>(n) * hw;
  if (targets.size() != count || quality.size() != count) {
    throw ShapeError("batch_loss: targets/quality do not match forecast geometry " + ad::shape_str(probs.shape()));
  }
  auto weights = std::make_shared<std::vector<T>>(count);
  const auto p = probs.values();
  std::vector<T> column(static_cast<std::size_t>(k));
  for (int b = 0; b < n; ++b) {
    for (std::size_t pos = 0; pos < hw; ++pos) {
      const std::size_t i = static_cast<std::size_t>(b) * hw + pos;
      double factor = 1.0;
      if (distance_weighting) {
        for (int c = 0; c < k; ++c) column[static_cast<std::size_t>(c)] = p[(static_cast<std::size_t>(b) * k + c) * hw + pos];
        factor += std::abs(targets[i] - argmax_class<T>(column));
      }
      (*weights)[i] = static_cast<T>(quality[i] * factor);
    }
  }
  auto t = std::make_shared<const std::vector<int>>(targets);
  return ad::weighted_nll(ad::log(probs, static_cast<T>(kProbFloor)), t, std::shared_ptr<const std::vector<T>>(weights));
}

template ad::Tensor<float> batch_loss(const ad::Tensor<float>&, const std::vector<int>&, const std::vector<float>&, bool);
template ad::Tensor<double> batch_loss(const ad::Tensor<double>&, const std::vector<int>&, const std::vector<double>&, bool);

}  // namespace nwc
