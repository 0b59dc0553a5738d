#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "qsmlab/adam.hpp"
#include "qsmlab/checkpoint.hpp"
#include "qsmlab/ops.hpp"
#include "testing.hpp"

using namespace qsmlab;
using namespace qsmlab::ad;
using qsmlab::testing::grad_check;
using qsmlab::testing::random_tensor;

namespace {

constexpr double kOpTol = 1e-6;

// Weighted sum so every output entry gets a distinct upstream gradient.
Tensor probe(const Tensor& y, std::uint64_t seed = 99) {
  const Tensor w = random_tensor(y.shape(), seed, -1.0, 1.0, false);
  return sum(mul(y, w));
}

Tensor away_from_zero(const Shape& s, std::uint64_t seed) {
  auto v = qsmlab::testing::random_values(numel(s), seed, 0.2, 1.0);
  for (std::size_t i = 0; i < v.size(); i += 2) v[i] = -v[i];
  return Tensor::from(s, std::move(v), true);
}

// Direct 7-loop cross-correlation with zero padding.
std::vector<double> naive_conv(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  const auto& s = x.shape();
  const auto& ws = w.shape();
  const long k = long(ws[2]);
  const long ox = (long(s[2]) + 2 * pad - k) / stride + 1;
  const long oy = (long(s[3]) + 2 * pad - k) / stride + 1;
  const long oz = (long(s[4]) + 2 * pad - k) / stride + 1;
  std::vector<double> out;
  auto X = [&](std::size_t n, std::size_t c, long i, long j, long l) -> double {
    if (i < 0 || j < 0 || l < 0 || i >= long(s[2]) || j >= long(s[3]) || l >= long(s[4])) return 0.0;
    return x.values()[(((n * s[1] + c) * s[2] + i) * s[3] + j) * s[4] + l];
  };
  for (std::size_t n = 0; n < s[0]; ++n)
    for (std::size_t co = 0; co < ws[0]; ++co)
      for (long i = 0; i < ox; ++i)
        for (long j = 0; j < oy; ++j)
          for (long l = 0; l < oz; ++l) {
            double acc = b.values()[co];
            for (std::size_t ci = 0; ci < ws[1]; ++ci)
              for (long a = 0; a < k; ++a)
                for (long bb = 0; bb < k; ++bb)
                  for (long c = 0; c < k; ++c)
                    acc += w.values()[(((co * ws[1] + ci) * k + a) * k + bb) * k + c] *
                           X(n, ci, i * stride + a - pad, j * stride + bb - pad, l * stride + c - pad);
            out.push_back(acc);
          }
  return out;
}

}  // namespace

TEST(Tensor, RejectsBadShapes) {
  EXPECT_THROW(Tensor::from({2, 3}, {1.0, 2.0}), DimensionError);
  EXPECT_THROW(Tensor::from({}, qsmlab::ad::Buffer{}), DimensionError);
  EXPECT_THROW(Tensor::from({1, 1, 1, 1, 1, 1}, {1.0}), DimensionError);
}

TEST(Tensor, LeafGradsAccumulateInteriorReset) {
  Tensor x = Tensor::from({3}, {1.0, 2.0, 3.0}, true);
  const Tensor loss = sum(square(x));
  ComputeGraph g(loss);
  g.backward();
  g.backward();
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(x.grad()[i], 4.0 * x.values()[i]);
}

TEST(Tensor, SharedSubexpressionVisitedOnce) {
  Tensor x = Tensor::from({2}, {0.5, -1.5}, true);
  const Tensor y = exp(x);
  const Tensor loss = sum(add(mul(y, y), y));
  ComputeGraph g(loss);
  std::size_t exp_nodes = 0;
  for (Node* n : g.order()) exp_nodes += std::string(n->op) == "exp";
  EXPECT_EQ(exp_nodes, 1u);
  g.backward();
  for (std::size_t i = 0; i < 2; ++i) {
    const double e = std::exp(x.values()[i]);
    EXPECT_NEAR(x.grad()[i], 2 * e * e + e, 1e-12);
  }
}

TEST(Tensor, NoGradGuardRecordsNothing) {
  Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
  NoGradGuard guard;
  const Tensor y = square(x);
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(y.node()->parents.empty());
}

TEST(Tensor, ConstantsRecordNoGraph) {
  const Tensor x = Tensor::from({2}, {1.0, 2.0});
  const Tensor y = exp(x);
  EXPECT_FALSE(y.requires_grad());
  EXPECT_FALSE(static_cast<bool>(y.node()->backward));
}

TEST(Ops, NumericalGuards) {
  const Tensor big = Tensor::from({2}, {100.0, -100.0});
  const Tensor e = exp(big);
  EXPECT_DOUBLE_EQ(e.values()[0], std::exp(kExpClamp));
  EXPECT_DOUBLE_EQ(e.values()[1], std::exp(-kExpClamp));
  EXPECT_THROW(log(Tensor::from({1}, {0.0})), NumericalError);
  EXPECT_THROW(log(Tensor::from({1}, {-1.0})), NumericalError);
  EXPECT_THROW(sqrt(Tensor::from({1}, {-1.0})), NumericalError);
}

TEST(OpsGradient, Elementwise) {
  const Shape s{2, 3, 4};
  Tensor a = random_tensor(s, 1);
  Tensor b = random_tensor(s, 2);
  Tensor pos = random_tensor(s, 3, 0.5, 2.0);
  Tensor nz = away_from_zero(s, 4);
  EXPECT_LT(grad_check([&] { return probe(add(a, b)); }, {a, b}).rel_error, kOpTol);
  EXPECT_LT(grad_check([&] { return probe(sub(a, b)); }, {a, b}).rel_error, kOpTol);
  EXPECT_LT(grad_check([&] { return probe(mul(a, b)); }, {a, b}).rel_error, kOpTol);
  EXPECT_LT(grad_check([&] { return probe(scale(a, -2.5)); }, {a}).rel_error, kOpTol);
  EXPECT_LT(grad_check([&] { return probe(add_scalar(a, 3.0)); }, {a}).rel_error, kOpTol);
  EXPECT_LT(grad_check([&] { return probe(exp(a)); }, {a}).rel_error, kOpTol);
  EXPECT_LT(grad_check([&] { return probe(log(pos)); }, {pos}).rel_error, kOpTol);
  EXPECT_LT(grad_check([&] { return probe(square(a)); }, {a}).rel_error, kOpTol);
  EXPECT_LT(grad_check([&] { return probe(sqrt(pos)); }, {pos}).rel_error, kOpTol);
  EXPECT_LT(grad_check([&] { return probe(abs(nz)); }, {nz}).rel_error, kOpTol);
  EXPECT_LT(grad_check([&] { return probe(relu(nz)); }, {nz}).rel_error, kOpTol);
  EXPECT_LT(grad_check([&] { return probe(clamp(nz, -0.6, 0.6)); }, {nz}).rel_error, kOpTol);
  EXPECT_LT(grad_check([&] { return sum(a); }, {a}).rel_error, kOpTol);
  EXPECT_LT(grad_check([&] { return mean(square(a)); }, {a}).rel_error, kOpTol);
}

TEST(OpsGradient, Conv3SamePadding) {
  Tensor x = random_tensor({2, 2, 5, 4, 6}, 10);
  Tensor w = random_tensor({3, 2, 3, 3, 3}, 11);
  Tensor b = random_tensor({3}, 12);
  EXPECT_LT(grad_check([&] { return probe(conv3(x, w, b)); }, {x, w, b}).rel_error, kOpTol);
}

TEST(OpsGradient, Conv3StridedAndPointwise) {
  Tensor x = random_tensor({1, 2, 6, 4, 4}, 13);
  Tensor w2 = random_tensor({3, 2, 2, 2, 2}, 14);
  Tensor w1 = random_tensor({1, 2, 1, 1, 1}, 15);
  Tensor b3 = random_tensor({3}, 16);
  Tensor b1 = random_tensor({1}, 17);
  EXPECT_LT(grad_check([&] { return probe(conv3(x, w2, b3, 2, 0)); }, {x, w2, b3}).rel_error, kOpTol);
  EXPECT_LT(grad_check([&] { return probe(conv3(x, w1, b1, 1, 0)); }, {x, w1, b1}).rel_error, kOpTol);
}

TEST(Ops, Conv3MatchesDirectLoops) {
  const Tensor x = random_tensor({2, 3, 7, 5, 6}, 20, -1, 1, false);
  const Tensor w = random_tensor({4, 3, 3, 3, 3}, 21, -1, 1, false);
  const Tensor b = random_tensor({4}, 22, -1, 1, false);
  const auto ref = naive_conv(x, w, b, 1, 1);
  const Tensor y = conv3(x, w, b);
  ASSERT_EQ(y.numel(), ref.size());
  EXPECT_LT(qsmlab::testing::rel_error({y.values().begin(), y.values().end()}, ref), 1e-13);

  const auto ref2 = naive_conv(x, w, b, 2, 0);
  const Tensor y2 = conv3(x, w, b, 2, 0);
  ASSERT_EQ(y2.numel(), ref2.size());
  EXPECT_LT(qsmlab::testing::rel_error({y2.values().begin(), y2.values().end()}, ref2), 1e-13);
}

TEST(Ops, Conv3LargeVolumeChunkingMatchesDirectLoops) {
  // Output planes larger than one im2col chunk.
  const Tensor x = random_tensor({1, 2, 12, 40, 40}, 23, -1, 1, false);
  const Tensor w = random_tensor({2, 2, 3, 3, 3}, 24, -1, 1, false);
  const Tensor b = random_tensor({2}, 25, -1, 1, false);
  const auto ref = naive_conv(x, w, b, 1, 1);
  const Tensor y = conv3(x, w, b);
  EXPECT_LT(qsmlab::testing::rel_error({y.values().begin(), y.values().end()}, ref), 1e-13);
}

TEST(Ops, TransposedConvIsAdjointOfStridedConv) {
  const Tensor w = random_tensor({3, 2, 2, 2, 2}, 30, -1, 1, false);  // (Cin_T, Cout_T)
  const Tensor zero_t = Tensor::zeros({2});
  const Tensor zero_c = Tensor::zeros({3});
  const Tensor x = random_tensor({1, 3, 3, 2, 4}, 31, -1, 1, false);
  const Tensor y = random_tensor({1, 2, 6, 4, 8}, 32, -1, 1, false);
  const Tensor tx = conv3_transposed(x, w, zero_t);
  // The strided conv reads the same buffer as a (Cout_c = 3, Cin_c = 2) kernel.
  const Tensor cy = conv3(y, w, zero_c, 2, 0);
  double lhs = 0.0;
  double rhs = 0.0;
  for (std::size_t i = 0; i < tx.numel(); ++i) lhs += tx.values()[i] * y.values()[i];
  for (std::size_t i = 0; i < cy.numel(); ++i) rhs += cy.values()[i] * x.values()[i];
  EXPECT_NEAR(lhs, rhs, 1e-12 * std::abs(lhs));
}

TEST(OpsGradient, TransposedConv) {
  Tensor x = random_tensor({2, 3, 2, 3, 2}, 33);
  Tensor w = random_tensor({3, 2, 2, 2, 2}, 34);
  Tensor b = random_tensor({2}, 35);
  const Tensor y = conv3_transposed(x, w, b);
  EXPECT_EQ(y.shape(), (Shape{2, 2, 4, 6, 4}));
  EXPECT_LT(grad_check([&] { return probe(conv3_transposed(x, w, b)); }, {x, w, b}).rel_error, kOpTol);
}

TEST(OpsGradient, MaxPool) {
  // Distinct values keep the argmax stable under the finite-difference step.
  auto v = qsmlab::testing::random_values(2 * 2 * 4 * 4 * 4, 40);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += 0.01 * double(i);
  Tensor x = Tensor::from({2, 2, 4, 4, 4}, v, true);
  const Tensor y = maxpool3(x);
  EXPECT_EQ(y.shape(), (Shape{2, 2, 2, 2, 2}));
  EXPECT_LT(grad_check([&] { return probe(maxpool3(x)); }, {x}).rel_error, kOpTol);
  EXPECT_THROW(maxpool3(Tensor::zeros({1, 1, 3, 4, 4})), DimensionError);
}

TEST(Ops, MaxPoolTiesRouteToFirst) {
  Tensor x = Tensor::full({1, 1, 2, 2, 2}, 1.0, true);
  backward(sum(maxpool3(x)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 1.0);
  for (std::size_t i = 1; i < 8; ++i) EXPECT_DOUBLE_EQ(x.grad()[i], 0.0);
}

TEST(OpsGradient, BatchNormTrainAndEval) {
  Tensor x = random_tensor({2, 3, 3, 2, 2}, 50);
  Tensor gamma = random_tensor({3}, 51, 0.5, 1.5);
  Tensor beta = random_tensor({3}, 52);
  RunningStats stats{Tensor::zeros({3}), Tensor::full({3}, 1.0)};
  EXPECT_LT(grad_check([&] { return probe(batchnorm3(x, gamma, beta, stats, NormMode::Train)); },
                       {x, gamma, beta})
                .rel_error,
            kOpTol);
  RunningStats frozen{random_tensor({3}, 53, -1, 1, false), random_tensor({3}, 54, 0.5, 2.0, false)};
  const auto before = std::vector<double>(frozen.mean.values().begin(), frozen.mean.values().end());
  EXPECT_LT(grad_check([&] { return probe(batchnorm3(x, gamma, beta, frozen, NormMode::Eval)); },
                       {x, gamma, beta})
                .rel_error,
            kOpTol);
  EXPECT_EQ(std::vector<double>(frozen.mean.values().begin(), frozen.mean.values().end()), before);
}

TEST(Ops, BatchNormRunningStatistics) {
  const Tensor x = Tensor::from({2, 1, 1, 1, 2}, {1.0, 2.0, 3.0, 6.0});
  const Tensor g = Tensor::full({1}, 1.0);
  const Tensor b = Tensor::zeros({1});
  RunningStats stats{Tensor::zeros({1}), Tensor::full({1}, 1.0)};
  const Tensor y = batchnorm3(x, g, b, stats, NormMode::Train);
  // mean 3, biased var 3.5, unbiased 14/3
  EXPECT_NEAR(stats.mean.values()[0], 0.3, 1e-15);
  EXPECT_NEAR(stats.var.values()[0], 0.9 + 0.1 * 14.0 / 3.0, 1e-15);
  EXPECT_NEAR(y.values()[0], (1.0 - 3.0) / std::sqrt(3.5 + 1e-5), 1e-12);
}

TEST(OpsGradient, ConcatAndLinearMap) {
  Tensor a = random_tensor({2, 1, 2, 2, 2}, 60);
  Tensor b = random_tensor({2, 3, 2, 2, 2}, 61);
  const Tensor c = concat({a, b});
  EXPECT_EQ(c.shape(), (Shape{2, 4, 2, 2, 2}));
  EXPECT_LT(grad_check([&] { return probe(concat({a, b})); }, {a, b}).rel_error, kOpTol);

  // y = M x with a fixed 2x3 matrix.
  const double M[2][3] = {{1.0, -2.0, 0.5}, {0.25, 3.0, -1.0}};
  LinearFn fwd = [&](std::span<const double> in, std::span<double> out) {
    for (int r = 0; r < 2; ++r) out[r] = M[r][0] * in[0] + M[r][1] * in[1] + M[r][2] * in[2];
  };
  LinearFn adj = [&](std::span<const double> in, std::span<double> out) {
    for (int c = 0; c < 3; ++c) out[c] = M[0][c] * in[0] + M[1][c] * in[1];
  };
  Tensor x = random_tensor({3}, 62);
  EXPECT_LT(grad_check([&] { return probe(linear_map(x, {2}, fwd, adj, "matvec")); }, {x}).rel_error,
            kOpTol);
}

TEST(Adam, FirstStepsMatchHandComputation) {
  ParameterRegistry reg;
  Tensor& p = reg.add_parameter("p", Tensor::from({2}, {1.0, -2.0}));
  AdamState st = make_adam(reg, 0.1);
  // loss = 0.5 * sum(p^2) -> grad = p
  std::vector<double> m(2, 0.0), v(2, 0.0), ref{1.0, -2.0};
  for (int t = 1; t <= 3; ++t) {
    reg.zero_grad();
    backward(scale(sum(square(p)), 0.5));
    adam_step(st, reg);
    for (int i = 0; i < 2; ++i) {
      const double g = ref[i];
      m[i] = 0.9 * m[i] + 0.1 * g;
      v[i] = 0.999 * v[i] + 0.001 * g * g;
      const double mh = m[i] / (1 - std::pow(0.9, t));
      const double vh = v[i] / (1 - std::pow(0.999, t));
      ref[i] -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
      EXPECT_NEAR(p.values()[i], ref[i], 1e-14);
    }
  }
  EXPECT_EQ(st.step, 3u);
}

TEST(Checkpoint, RoundTripWithAdamState) {
  const auto dir = std::filesystem::temp_directory_path() / "qsmlab_ckpt_test";
  std::filesystem::create_directories(dir);
  ParameterRegistry reg;
  reg.add_parameter("w", random_tensor({2, 3}, 70, -1, 1, false));
  reg.add_buffer("running", random_tensor({3}, 71, -1, 1, false));
  AdamState st = make_adam(reg, 0.01);
  reg.zero_grad();
  backward(sum(square(reg.parameters()[0].tensor)));
  adam_step(st, reg);
  save_checkpoint(dir / "ck", reg, &st, {{"note", "x"}});

  ParameterRegistry other;
  other.add_parameter("w", Tensor::zeros({2, 3}));
  other.add_buffer("running", Tensor::zeros({3}));
  const auto loaded = load_checkpoint(dir / "ck", other);
  EXPECT_EQ(loaded.metadata.at("note"), "x");
  ASSERT_TRUE(loaded.adam.has_value());
  EXPECT_EQ(loaded.adam->step, 1u);
  EXPECT_EQ(loaded.adam->m, st.m);
  EXPECT_EQ(loaded.adam->v, st.v);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(other.parameters()[0].tensor.values()[i], reg.parameters()[0].tensor.values()[i]);
  }
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(other.buffers()[0].tensor.values()[i], reg.buffers()[0].tensor.values()[i]);
  }

  ParameterRegistry wrong;
  wrong.add_parameter("w", Tensor::zeros({3, 2}));
  wrong.add_buffer("running", Tensor::zeros({3}));
  EXPECT_THROW(load_checkpoint(dir / "ck", wrong), Error);
  EXPECT_THROW(load_checkpoint(dir / "missing", other), IoError);
  std::filesystem::remove_all(dir);
}
