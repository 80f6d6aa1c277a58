#pragma once

#include <span>
#include <vector>

#include "nwc/tensor.hpp"

namespace nwc {

inline constexpr double kProbFloor = 1e-12;

/// Index of the largest entry; ties go to the lowest index.
template <class T>
int argmax_class(std::span<const T> probs) {
  int best = 0;
  for (int k = 1; k < static_cast<int>(probs.size()); ++k) {
    if (probs[static_cast<std::size_t>(k)] > probs[static_cast<std::size_t>(best)]) best = k;
  }
  return best;
}

/// quality_w * (1 + |k_t - k_p|) * -log(max(p[k_t], 1e-12)), k_p = argmax.
double pixel_loss(std::span<const double> probs, int target_class, double quality_w, bool distance_weighting = true);

/// Mean pixel loss over probs [N,K,H,W]. targets and quality hold N*H*W
/// entries. The argmax factor is a constant for differentiation.
template <class T>
ad::Tensor<T> batch_loss(const ad::Tensor<T>& probs, const std::vector<int>& targets, const std::vector<T>& quality,
                         bool distance_weighting = true);

extern template ad::Tensor<float> batch_loss(const ad::Tensor<float>&, const std::vector<int>&, const std::vector<float>&, bool);
extern template ad::Tensor<double> batch_loss(const ad::Tensor<double>&, const std::vector<int>&, const std::vector<double>&, bool);

}  // namespace nwc
