#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "qsmlab/tensor.hpp"
#include "qsmlab/volume.hpp"

namespace qsmlab::testing {

inline Volume3D random_volume(const Dims& d, std::uint64_t seed, double sd = 1.0,
                              const VoxelSize& vs = {}) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sd);
  Volume3D v(d, vs);
  for (double& x : v.data()) x = n(rng);
  return v;
}

inline std::vector<double> random_values(std::size_t n, std::uint64_t seed, double lo = -1.0,
                                         double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

inline ad::Tensor random_tensor(const ad::Shape& s, std::uint64_t seed, double lo = -1.0,
                                double hi = 1.0, bool requires_grad = true) {
  return ad::Tensor::from(s, random_values(ad::numel(s), seed, lo, hi), requires_grad);
}

inline double rel_error(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(num) / std::max({std::sqrt(na), std::sqrt(nb), 1e-300});
}

struct GradCheck {
  double rel_error = 0.0;
  std::vector<double> analytic;
  std::vector<double> numeric;
};

// Central differences of a scalar loss w.r.t. every entry of `inputs`,
// compared norm-wise against the accumulated analytic gradient.
inline GradCheck grad_check(const std::function<ad::Tensor()>& loss_fn,
                            std::vector<ad::Tensor> inputs, double h = 1e-5) {
  for (auto& t : inputs) std::fill(t.mutable_grad().begin(), t.mutable_grad().end(), 0.0);
  ad::backward(loss_fn());
  GradCheck res;
  for (auto& t : inputs) {
    res.analytic.insert(res.analytic.end(), t.grad().begin(), t.grad().end());
    auto v = t.mutable_values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double x0 = v[i];
      v[i] = x0 + h;
      const double fp = loss_fn().item();
      v[i] = x0 - h;
      const double fm = loss_fn().item();
      v[i] = x0;
      res.numeric.push_back((fp - fm) / (2.0 * h));
    }
  }
  res.rel_error = rel_error(res.analytic, res.numeric);
  return res;
}

}  // namespace qsmlab::testing
