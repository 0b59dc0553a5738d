#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "qsmlab/adam.hpp"
#include "qsmlab/network.hpp"
#include "qsmlab/phantom.hpp"
#include "qsmlab/posterior.hpp"

namespace qsmlab::pdi {

struct TrainConfig {
  double lr = 1e-3;
  int epochs = 60;
  int batch_size = 1;
  Dims patch{64, 64, 32};
  Dims stride{21, 21, 11};
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;  // NaN when there is no validation split
};

/// Everything needed to continue a run bit-exactly.
struct TrainState {
  int epochs_done = 0;
  ad::AdamState adam;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val = 0.0;
  ad::ParameterRegistry best;  // parameters and buffers at best_epoch
};

/// Patch-based supervised training on the Gaussian negative log-likelihood.
/// Epoch e shuffles the training patches with a stream derived from
/// (seed, e), so a resumed run reproduces an uninterrupted one.
class SupervisedTrainer {
 public:
  SupervisedTrainer(DualDecoderNet& net, const std::vector<CorpusMember>& corpus, TrainConfig config);

  // Replaces the optimiser/history state, e.g. from a checkpoint.
  void restore(TrainState state);
  const TrainState& state() const { return state_; }
  TrainState& state() { return state_; }

  EpochRecord run_epoch();
  // Runs the remaining epochs; `on_epoch` sees every completed epoch.
  void train(const std::function<void(const EpochRecord&)>& on_epoch = {});

  // Mean NLL over whole validation volumes, eval-mode normalisation.
  double validation_loss() const;
  std::size_t train_patch_count() const { return train_inputs_.size(); }

 private:
  DualDecoderNet& net_;
  TrainConfig config_;
  std::vector<Volume3D> train_inputs_;
  std::vector<Volume3D> train_labels_;
  std::vector<const CorpusMember*> val_;
  TrainState state_;
};

// Checkpoint of a run in progress: current parameters + Adam state at
// `path`, best-so-far parameters at `path` + ".best", history in metadata.
void save_training_state(const std::filesystem::path& path, const DualDecoderNet& net,
                         const TrainState& state, const TrainConfig& config);
// Loads current parameters into `net` and returns the state to restore().
TrainState load_training_state(const std::filesystem::path& path, DualDecoderNet& net);
std::filesystem::path best_checkpoint_path(const std::filesystem::path& path);

// Deployable network: parameters and buffers plus the NetConfig needed to
// rebuild it, as a checkpoint with {"kind": "model"} metadata.
void save_model(const std::filesystem::path& path, const DualDecoderNet& net,
                const nlohmann::json& extra = nullptr);
std::unique_ptr<DualDecoderNet> load_model(const std::filesystem::path& path);

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val = 0.0;
};

// Trains and leaves the best-validation parameters loaded in `net`.
TrainResult train_supervised(DualDecoderNet& net, const std::vector<CorpusMember>& corpus,
                             const TrainConfig& config);

enum class ViVariant { VI1, VI2 };
std::string to_string(ViVariant v);
ViVariant vi_variant_from_string(const std::string& s);

struct ViConfig {
  int K = 5;
  double lambda = 1e-3;
  int iterations = 100;
  double lr = 1e-3;
  ViVariant variant = ViVariant::VI2;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const ViConfig& c);
void from_json(const nlohmann::json& j, ViConfig& c);

struct ViField {
  Volume3D field;
  ViPhysics physics;
};

struct ViResult {
  std::vector<double> history;  // mean loss over fields, one per iteration
};

// Draws for field f at iteration it.
EpsDraws vi_draws(const ViConfig& config, const Dims& dims, int iteration, std::size_t field);

/// One Adam step per iteration on the mean VI loss over all fields, whole
/// volumes, normalisation frozen at the running statistics.
ViResult finetune_vi(DualDecoderNet& net, const std::vector<ViField>& fields, const ViConfig& config,
                     const std::function<void(int, double)>& on_iteration = {});

struct InferOptions {
  bool patches = false;
  Dims patch{64, 64, 32};
  Dims stride{21, 21, 11};
};

struct Inference {
  Volume3D mu;
  Volume3D sigma;
  Volume3D log_var;
};

Inference infer(DualDecoderNet& net, const Volume3D& b, const InferOptions& options = {});

}  // namespace qsmlab::pdi
