#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <nlohmann/json.hpp>

#include "qsmlab/patches.hpp"
#include "qsmlab/training.hpp"
#include "testing.hpp"

using namespace qsmlab;
using namespace qsmlab::pdi;
using qsmlab::testing::random_volume;

namespace {

NetConfig tiny_net() {
  NetConfig c;
  c.depth = 2;
  c.filters = {2, 4};
  c.seed = 5;
  c.patch = {8, 8, 8};
  return c;
}

TrainConfig tiny_train(int epochs) {
  TrainConfig t;
  t.epochs = epochs;
  t.patch = {8, 8, 8};
  t.stride = {8, 8, 8};
  t.lr = 3e-3;
  t.seed = 11;
  return t;
}

const std::vector<CorpusMember>& tiny_corpus() {
  static const std::vector<CorpusMember> c = [] {
    CorpusSpec s = default_corpus_spec({24, 24, 16});
    s.split_counts = std::vector<int>{2, 1, 1};
    return make_corpus(4, s, 3);
  }();
  return c;
}

std::vector<double> flat_params(DualDecoderNet& net) {
  std::vector<double> v;
  for (const auto& p : net.registry().parameters())
    v.insert(v.end(), p.tensor.values().begin(), p.tensor.values().end());
  for (const auto& p : net.registry().buffers())
    v.insert(v.end(), p.tensor.values().begin(), p.tensor.values().end());
  return v;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST(Patches, StartsSnapToBoundary) {
  EXPECT_EQ(patch_starts(10, 4, 3), (std::vector<std::size_t>{0, 3, 6}));
  EXPECT_EQ(patch_starts(10, 4, 4), (std::vector<std::size_t>{0, 4, 6}));
  EXPECT_EQ(patch_starts(8, 8, 3), (std::vector<std::size_t>{0}));
  EXPECT_EQ(patch_starts(64, 64, 21), (std::vector<std::size_t>{0}));
  EXPECT_EQ(patch_starts(100, 64, 21), (std::vector<std::size_t>{0, 21, 36}));
}

TEST(Patches, ExtractStitchRoundTrip) {
  const Volume3D v = random_volume({13, 10, 9}, 1);
  for (const Dims stride : {Dims{5, 3, 2}, Dims{8, 6, 4}, Dims{1, 1, 1}}) {
    const auto patches = extract_patches(v, {8, 6, 4}, stride);
    const Volume3D back = stitch_patches(patches, v.dims(), v.voxel_size());
    EXPECT_EQ(back.values(), v.values());
  }
  const Volume3D c(v.dims(), {}, 0.37);
  EXPECT_EQ(stitch_patches(extract_patches(c, {8, 6, 4}, {3, 3, 3}), c.dims(), {}).values(), c.values());
  EXPECT_THROW(extract_patches(v, {14, 6, 4}, {1, 1, 1}), DimensionError);
  auto partial = extract_patches(v, {8, 6, 4}, {8, 6, 4});
  partial.pop_back();
  EXPECT_THROW(stitch_patches(partial, v.dims(), {}), DimensionError);
}

TEST(Training, ConfigJsonAndValidation) {
  const TrainConfig t = tiny_train(3);
  const TrainConfig back = nlohmann::json(t).get<TrainConfig>();
  EXPECT_EQ(back.patch, t.patch);
  EXPECT_EQ(back.epochs, 3);
  EXPECT_THROW(nlohmann::json::parse(R"({"lr": 0})").get<TrainConfig>(), ConfigError);
  EXPECT_EQ(vi_variant_from_string("vi1"), ViVariant::VI1);
  EXPECT_THROW(vi_variant_from_string("vi3"), ConfigError);
}

TEST(Training, OverfitsSingleVolume) {
  CorpusSpec s = default_corpus_spec({24, 24, 16});
  s.split_counts = std::vector<int>{1, 0, 0};
  const auto corpus = make_corpus(1, s, 8);
  NetConfig c = tiny_net();
  c.filters = {8, 16};
  DualDecoderNet net(c);
  TrainConfig t = tiny_train(100);
  t.lr = 1e-2;
  t.patch = {24, 24, 16};
  t.stride = {24, 24, 16};
  const TrainResult r = train_supervised(net, corpus, t);
  ASSERT_EQ(r.history.size(), 100u);
  EXPECT_TRUE(std::isnan(r.history.front().val_loss));
  EXPECT_LT(r.history.back().train_loss, r.history.front().train_loss - 2.0);
  EXPECT_EQ(r.best_val, std::min_element(r.history.begin(), r.history.end(), [](auto& a, auto& b) {
                          return a.train_loss < b.train_loss;
                        })->train_loss);
  // The best checkpoint predicts the training volume far better than zero.
  const Inference inf = infer(net, corpus[0].field);
  const double err = norm2(inf.mu - corpus[0].phantom.chi) / norm2(corpus[0].phantom.chi);
  EXPECT_LT(err, 0.6);
}

TEST(Training, SeededRunsAreIdentical) {
  DualDecoderNet a(tiny_net()), b(tiny_net());
  const TrainResult ra = train_supervised(a, tiny_corpus(), tiny_train(2));
  const TrainResult rb = train_supervised(b, tiny_corpus(), tiny_train(2));
  ASSERT_EQ(ra.history.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(ra.history[i].train_loss, rb.history[i].train_loss);
    EXPECT_EQ(ra.history[i].val_loss, rb.history[i].val_loss);
    EXPECT_TRUE(std::isfinite(ra.history[i].val_loss));
  }
  EXPECT_TRUE(bitwise_equal(flat_params(a), flat_params(b)));
}

TEST(Training, ResumeMatchesUninterruptedRun) {
  const auto dir = std::filesystem::temp_directory_path() / "qsmlab_resume_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);

  DualDecoderNet full(tiny_net());
  SupervisedTrainer tf(full, tiny_corpus(), tiny_train(3));
  tf.train();

  DualDecoderNet first(tiny_net());
  SupervisedTrainer t1(first, tiny_corpus(), tiny_train(3));
  t1.run_epoch();
  save_training_state(dir / "ck", first, t1.state(), tiny_train(3));

  DualDecoderNet second(tiny_net());
  SupervisedTrainer t2(second, tiny_corpus(), tiny_train(3));
  t2.restore(load_training_state(dir / "ck", second));
  t2.train();

  EXPECT_TRUE(bitwise_equal(flat_params(full), flat_params(second)));
  ASSERT_EQ(t2.state().history.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(t2.state().history[i].train_loss, tf.state().history[i].train_loss);
  }
  EXPECT_EQ(t2.state().best_epoch, tf.state().best_epoch);
  std::filesystem::remove_all(dir);
}

TEST(Training, NonFiniteLossIsReported) {
  DualDecoderNet net(tiny_net());
  for (auto& p : net.registry().parameters()) {
    if (p.name == "dec_mean.head.bias") p.tensor.mutable_values()[0] = std::nan("");
  }
  SupervisedTrainer t(net, tiny_corpus(), tiny_train(1));
  EXPECT_THROW(t.run_epoch(), NumericalError);
}

TEST(Finetune, ZeroIterationsIsNoOp) {
  DualDecoderNet net(tiny_net());
  const auto before = flat_params(net);
  const CorpusMember& m = tiny_corpus()[0];
  const std::vector<ViField> fields{{m.field, ViPhysics::from_noise(build_dipole_kernel(m.field.dims(), {}), m.noise)}};
  ViConfig c;
  c.iterations = 0;
  EXPECT_TRUE(finetune_vi(net, fields, c).history.empty());
  EXPECT_TRUE(bitwise_equal(flat_params(net), before));
}

TEST(Finetune, DecreasesLossAndIsDeterministic) {
  const CorpusMember& m = tiny_corpus()[0];
  const std::vector<ViField> fields{{m.field, ViPhysics::from_noise(build_dipole_kernel(m.field.dims(), {}), m.noise)}};
  ViConfig c;
  c.iterations = 15;
  c.K = 2;
  c.lr = 1e-2;
  c.seed = 4;
  DualDecoderNet a(tiny_net()), b(tiny_net());
  const auto ra = finetune_vi(a, fields, c);
  const auto rb = finetune_vi(b, fields, c);
  ASSERT_EQ(ra.history.size(), 15u);
  EXPECT_EQ(ra.history, rb.history);
  EXPECT_LT(ra.history.back(), ra.history.front());
  // Eval-mode fine-tuning leaves the running statistics alone.
  DualDecoderNet fresh(tiny_net());
  for (std::size_t i = 0; i < a.registry().buffers().size(); ++i) {
    const auto x = a.registry().buffers()[i].tensor.values();
    const auto y = fresh.registry().buffers()[i].tensor.values();
    EXPECT_TRUE(std::equal(x.begin(), x.end(), y.begin(), y.end()));
  }
}

TEST(Inference, PatchModeMatchesWholeVolumeWhenPatchCoversIt) {
  DualDecoderNet net(tiny_net());
  const Volume3D b = random_volume({16, 16, 8}, 4, 0.05);
  const Inference whole = infer(net, b);
  InferOptions o;
  o.patches = true;
  o.patch = {16, 16, 8};
  o.stride = {16, 16, 8};
  const Inference patched = infer(net, b, o);
  EXPECT_EQ(whole.mu.values(), patched.mu.values());
  for (std::size_t i = 0; i < b.size(); ++i) {
    EXPECT_NEAR(whole.sigma[i], std::exp(0.5 * whole.log_var[i]), 1e-15);
  }
  o.patch = {8, 8, 8};
  o.stride = {4, 4, 4};
  const Inference tiled = infer(net, b, o);
  EXPECT_EQ(tiled.mu.dims(), b.dims());
  EXPECT_TRUE(tiled.mu.all_finite());
}
