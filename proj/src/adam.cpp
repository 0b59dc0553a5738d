#include "qsmlab/adam.hpp"

#include <cmath>

namespace qsmlab::ad {

AdamState make_adam(const ParameterRegistry& params, double lr, double beta1, double beta2,
                    double eps) {
  if (!(lr > 0.0) || !(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) ||
      !(eps > 0.0)) {
    throw ConfigError("invalid Adam hyperparameters");
  }
  AdamState s;
  s.lr = lr;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.eps = eps;
  for (const auto& p : params.parameters()) {
    s.m.emplace_back(p.tensor.numel(), 0.0);
    s.v.emplace_back(p.tensor.numel(), 0.0);
  }
  return s;
}

void adam_step(AdamState& state, ParameterRegistry& params) {
  auto& list = params.parameters();
  if (state.m.size() != list.size() || state.v.size() != list.size()) {
    throw DimensionError("Adam state does not match the parameter registry");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < list.size(); ++k) {
    Tensor& p = list[k].tensor;
    if (state.m[k].size() != p.numel()) {
      throw DimensionError("Adam moment shape mismatch for '" + list[k].name + "'");
    }
    if (!p.has_grad()) continue;
    auto w = p.mutable_values();
    const auto g = p.grad();
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

}  // namespace qsmlab::ad
