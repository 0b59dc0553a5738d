#include <gtest/gtest.h>

#include <cmath>
#include <nlohmann/json.hpp>

#include "qsmlab/network.hpp"
#include "testing.hpp"

using namespace qsmlab;
using namespace qsmlab::pdi;

namespace {

NetConfig small_config(int depth = 3) {
  NetConfig c;
  c.depth = depth;
  c.filters = depth == 3 ? std::vector<int>{8, 16, 32} : std::vector<int>{2, 4};
  c.seed = 3;
  return c;
}

// Per-layer arithmetic, written out for depth 3, filters [8, 16, 32], k = 3.
std::size_t hand_count_depth3() {
  auto conv = [](std::size_t ci, std::size_t co) { return co * ci * 27 + co + 2 * co; };
  const std::size_t enc = conv(1, 8) + conv(8, 8) + conv(8, 16) + conv(16, 16) + conv(16, 32) + conv(32, 32);
  const std::size_t dec = (32 * 16 * 8 + 16) + conv(32, 16) + conv(16, 16) + (16 * 8 * 8 + 8) + conv(16, 8) +
                          conv(8, 8) + (8 + 1);
  return enc + 2 * dec;
}

}  // namespace

TEST(Network, ShapesPreserved) {
  DualDecoderNet net(small_config());
  const Tensor x = qsmlab::testing::random_tensor({1, 1, 32, 32, 16}, 1, -0.1, 0.1, false);
  ad::NoGradGuard ng;
  const auto out = net.forward(x, NormMode::Eval);
  EXPECT_EQ(out.mu.shape(), x.shape());
  EXPECT_EQ(out.log_var.shape(), x.shape());
}

TEST(Network, ParameterCountMatchesClosedForm) {
  const NetConfig c = small_config();
  DualDecoderNet net(c);
  EXPECT_EQ(net.parameter_count(), hand_count_depth3());
  EXPECT_EQ(expected_parameter_count(c), hand_count_depth3());
  NetConfig nobn = c;
  nobn.batch_norm = false;
  EXPECT_EQ(DualDecoderNet(nobn).parameter_count(), expected_parameter_count(nobn));
  NetConfig wide;
  wide.depth = 5;
  wide.filters = {32, 64, 128, 256, 512};
  EXPECT_EQ(expected_parameter_count(wide), DualDecoderNet(wide).parameter_count());
}

TEST(Network, SeededInitialisationIsDeterministic) {
  DualDecoderNet a(small_config()), b(small_config());
  NetConfig other = small_config();
  other.seed = 4;
  DualDecoderNet c(other);
  const auto& pa = a.registry().parameters();
  const auto& pb = b.registry().parameters();
  ASSERT_EQ(pa.size(), pb.size());
  bool differs = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].name, pb[i].name);
    EXPECT_TRUE(std::equal(pa[i].tensor.values().begin(), pa[i].tensor.values().end(),
                           pb[i].tensor.values().begin()));
    differs |= !std::equal(pa[i].tensor.values().begin(), pa[i].tensor.values().end(),
                           c.registry().parameters()[i].tensor.values().begin());
  }
  EXPECT_TRUE(differs);
}

TEST(Network, LogVarClampedAndFinite) {
  NetConfig c = small_config();
  c.init_log_var = 0.0;
  DualDecoderNet net(c);
  // Blow up the variance-head weights so the clamp is exercised.
  for (auto& p : net.registry().parameters()) {
    if (p.name == "dec_var.head.weight") {
      for (double& v : p.tensor.mutable_values()) v *= 1e4;
    }
  }
  ad::NoGradGuard ng;
  const Tensor x = qsmlab::testing::random_tensor({1, 1, 16, 16, 8}, 2, -1.0, 1.0, false);
  const auto out = net.forward(x, NormMode::Eval);
  bool hit_bound = false;
  for (double v : out.log_var.values()) {
    EXPECT_GE(v, kLogVarMin);
    EXPECT_LE(v, kLogVarMax);
    hit_bound |= v == kLogVarMin || v == kLogVarMax;
  }
  EXPECT_TRUE(hit_bound);
  const auto zero = net.forward(Tensor::zeros({1, 1, 16, 16, 8}), NormMode::Eval);
  for (double v : zero.mu.values()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Network, RejectsIndivisibleDimsAndBadConfig) {
  DualDecoderNet net(small_config());
  EXPECT_THROW(net.forward(Tensor::zeros({1, 1, 30, 32, 16}), NormMode::Eval), DimensionError);
  EXPECT_THROW(net.forward(Tensor::zeros({1, 2, 32, 32, 16}), NormMode::Eval), DimensionError);
  NetConfig bad = small_config();
  bad.filters = {8, 16};
  EXPECT_THROW(DualDecoderNet{bad}, ConfigError);
  EXPECT_THROW(nlohmann::json::parse(R"({"norm": "layer"})").get<NetConfig>(), ConfigError);
}

TEST(Network, ConfigJsonRoundTrip) {
  NetConfig c = small_config(2);
  c.batch_norm = false;
  c.init_log_var = -3.0;
  const nlohmann::json j = c;
  const NetConfig back = j.get<NetConfig>();
  EXPECT_EQ(back.filters, c.filters);
  EXPECT_EQ(back.batch_norm, false);
  EXPECT_EQ(back.init_log_var, -3.0);
  EXPECT_EQ(back.seed, c.seed);
}

TEST(Network, TrainModeUpdatesRunningStatsEvalDoesNot) {
  DualDecoderNet net(small_config(2));
  const Tensor x = qsmlab::testing::random_tensor({2, 1, 8, 8, 8}, 5, -1.0, 1.0, false);
  const auto snapshot = [&] {
    std::vector<double> v;
    for (const auto& b : net.registry().buffers()) v.insert(v.end(), b.tensor.values().begin(), b.tensor.values().end());
    return v;
  };
  const auto s0 = snapshot();
  {
    ad::NoGradGuard ng;
    net.forward(x, NormMode::Eval);
  }
  EXPECT_EQ(snapshot(), s0);
  net.forward(x, NormMode::Train);
  EXPECT_NE(snapshot(), s0);
}

TEST(Network, VolumeTensorConversion) {
  const Volume3D v = qsmlab::testing::random_volume({4, 3, 2}, 9, 1.0, {0.5, 1, 1});
  const Tensor t = volume_to_tensor(v);
  EXPECT_EQ(t.shape(), (ad::Shape{1, 1, 4, 3, 2}));
  const Volume3D back = tensor_to_volume(t, v.voxel_size());
  EXPECT_EQ(back.values(), v.values());
  EXPECT_EQ(back.voxel_size(), v.voxel_size());
}
