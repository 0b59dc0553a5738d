#pragma once

#include <functional>
#include <vector>

#include "qsmlab/tensor.hpp"

namespace qsmlab::ad {

// Convolution-family ops take rank-5 tensors laid out (batch, channel, x, y, z).

/// Cross-correlation with a (Cout, Cin, k, k, k) kernel and (Cout) bias.
/// `padding < 0` selects "same" padding k/2.
Tensor conv3(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride = 1,
             int padding = -1);

/// Stride-2 transposed convolution with a (Cin, Cout, 2, 2, 2) kernel. Its
/// linear part is the exact adjoint of conv3(stride 2, padding 0) sharing the
/// same weight buffer. Doubles every spatial extent.
Tensor conv3_transposed(const Tensor& input, const Tensor& weight, const Tensor& bias);

/// 2x2x2 max pooling; the gradient goes to the first maximum in scan order.
Tensor maxpool3(const Tensor& input);

enum class NormMode { Train, Eval };

/// Per-channel running statistics of one batch-norm layer.
struct RunningStats {
  Tensor mean;  // (C)
  Tensor var;   // (C)
  double momentum = 0.1;
  double eps = 1e-5;
};

// Train mode normalises with statistics over batch and space and updates the
// running statistics; eval mode uses the running statistics.
Tensor batchnorm3(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  RunningStats& stats, NormMode mode);

Tensor relu(const Tensor& x);
// Concatenation along the channel axis.
Tensor concat(const std::vector<Tensor>& parts);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);
Tensor add_scalar(const Tensor& x, double s);
Tensor exp(const Tensor& x);     // input clamped to [-30, 30]
Tensor log(const Tensor& x);     // input floored at 1e-12; throws on x <= 0
Tensor square(const Tensor& x);
Tensor sqrt(const Tensor& x);    // throws on x < 0
Tensor abs(const Tensor& x);
Tensor clamp(const Tensor& x, double lo, double hi);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

inline constexpr double kExpClamp = 30.0;
inline constexpr double kLogFloor = 1e-12;

/// Linear map y = L x with a user-supplied adjoint. Backward applies the
/// adjoint to the incoming gradient. Used for physics operators.
using LinearFn = std::function<void(std::span<const double> in, std::span<double> out)>;
Tensor linear_map(const Tensor& x, Shape out_shape, LinearFn forward, LinearFn adjoint,
                  const char* name);

}  // namespace qsmlab::ad
