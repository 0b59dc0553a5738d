#pragma once

#include <cstdint>
#include <vector>

#include "qsmlab/tensor.hpp"

namespace qsmlab::ad {

/// Bias-corrected Adam. Moments are kept per parameter, in registry order.
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

AdamState make_adam(const ParameterRegistry& params, double lr = 1e-3, double beta1 = 0.9,
                    double beta2 = 0.999, double eps = 1e-8);

// Applies one update using the gradients currently stored on the parameters.
void adam_step(AdamState& state, ParameterRegistry& params);

}  // namespace qsmlab::ad
