#pragma once

// Checks shared by the unit tests and the acceptance binary.

#include <string>
#include <vector>

#include "nwc/model.hpp"

namespace nwc::test {

struct GradResult {
  std::string name;
  double max_rel = 0.0;
  int checked = 0;
  bool composite = false;
};

/// Every autodiff op against central differences, then two composite graphs
/// (small conv net with cross-entropy, full model loss).
std::vector<GradResult> run_gradient_suite(std::uint64_t seed = 99);

/// Small model geometry that keeps every code path of the real one:
/// two sources, skip connection, temporal stack, lead conditioning.
ModelConfig tiny_model_config();

/// Random per-source stacks matching a model config.
std::map<std::string, FieldStack> random_inputs(const ModelConfig& config, std::uint64_t seed);

}  // namespace nwc::test
