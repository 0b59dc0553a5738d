#include "qsmlab/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <numeric>
#include <random>

#include "qsmlab/checkpoint.hpp"
#include "qsmlab/patches.hpp"

namespace qsmlab::pdi {
using nlohmann::json;

namespace {

Dims dims_from_json(const json& j, const char* what) {
  const auto v = j.get<std::vector<std::size_t>>();
  if (v.size() != 3) throw ConfigError(std::string(what) + " must have three entries");
  return {v[0], v[1], v[2]};
}

void require_finite_loss(double loss, const std::string& where) {
  if (!std::isfinite(loss)) throw NumericalError("non-finite loss " + where);
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (patch.size() == 0 || stride.size() == 0) throw ConfigError("patch and stride must be positive");
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"lr", c.lr},
           {"epochs", c.epochs},
           {"batch_size", c.batch_size},
           {"patch", c.patch.as_array()},
           {"stride", c.stride.as_array()},
           {"seed", c.seed}};
}

void from_json(const json& j, TrainConfig& c) {
  c.lr = j.value("lr", c.lr);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  if (j.contains("patch")) c.patch = dims_from_json(j["patch"], "patch");
  if (j.contains("stride")) c.stride = dims_from_json(j["stride"], "stride");
  c.seed = j.value("seed", c.seed);
  c.validate();
}

SupervisedTrainer::SupervisedTrainer(DualDecoderNet& net, const std::vector<CorpusMember>& corpus,
                                     TrainConfig config)
    : net_(net), config_(std::move(config)) {
  config_.validate();
  net_.check_input_dims(config_.patch);
  for (const auto& m : corpus) {
    if (m.split == "train") {
      for (auto& p : extract_patches(m.field, config_.patch, config_.stride)) {
        train_inputs_.push_back(std::move(p.data));
      }
      for (auto& p : extract_patches(m.phantom.chi, config_.patch, config_.stride)) {
        train_labels_.push_back(std::move(p.data));
      }
    } else if (m.split == "val") {
      val_.push_back(&m);
    }
  }
  if (train_inputs_.empty()) throw ConfigError("corpus has no training members");
  state_.adam = ad::make_adam(net_.registry(), config_.lr);
  state_.best = net_.registry().clone();
  state_.best_val = std::numeric_limits<double>::infinity();
}

void SupervisedTrainer::restore(TrainState state) { state_ = std::move(state); }

double SupervisedTrainer::validation_loss() const {
  if (val_.empty()) return std::numeric_limits<double>::quiet_NaN();
  InferOptions opt;
  opt.patch = config_.patch;
  opt.stride = config_.stride;
  double acc = 0.0;
  for (const CorpusMember* m : val_) {
    opt.patches = m->field.dims() != config_.patch;
    const Inference inf = infer(net_, m->field, opt);
    acc += gaussian_nll(PosteriorGaussian{inf.mu, inf.log_var}, m->phantom.chi);
  }
  return acc / static_cast<double>(val_.size());
}

EpochRecord SupervisedTrainer::run_epoch() {
  const int epoch = state_.epochs_done + 1;
  std::vector<std::size_t> order(train_inputs_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(config_.seed, static_cast<std::uint64_t>(epoch)));
  std::shuffle(order.begin(), order.end(), rng);

  auto& reg = net_.registry();
  double loss_sum = 0.0;
  std::size_t batches = 0;
  for (std::size_t start = 0; start < order.size(); start += std::size_t(config_.batch_size)) {
    const std::size_t stop = std::min(order.size(), start + std::size_t(config_.batch_size));
    std::vector<const Volume3D*> inputs;
    std::vector<const Volume3D*> labels;
    for (std::size_t i = start; i < stop; ++i) {
      inputs.push_back(&train_inputs_[order[i]]);
      labels.push_back(&train_labels_[order[i]]);
    }
    reg.zero_grad();
    const auto out = net_.forward(volumes_to_batch(inputs), NormMode::Train);
    const Tensor loss = gaussian_nll(out.mu, out.log_var, volumes_to_batch(labels));
    require_finite_loss(loss.item(), "at epoch " + std::to_string(epoch) + ", batch " +
                                         std::to_string(batches) + " (patches " +
                                         std::to_string(order[start]) + "..)");
    ad::backward(loss);
    ad::adam_step(state_.adam, reg);
    loss_sum += loss.item();
    ++batches;
  }

  EpochRecord rec{epoch, loss_sum / static_cast<double>(batches), validation_loss()};
  require_finite_loss(rec.train_loss, "(epoch mean) at epoch " + std::to_string(epoch));
  const double score = std::isnan(rec.val_loss) ? rec.train_loss : rec.val_loss;
  if (score < state_.best_val) {
    state_.best_val = score;
    state_.best_epoch = epoch;
    state_.best = reg.clone();
  }
  state_.history.push_back(rec);
  state_.epochs_done = epoch;
  return rec;
}

void SupervisedTrainer::train(const std::function<void(const EpochRecord&)>& on_epoch) {
  while (state_.epochs_done < config_.epochs) {
    const EpochRecord rec = run_epoch();
    if (on_epoch) on_epoch(rec);
  }
}

std::filesystem::path best_checkpoint_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".best");
}

void save_training_state(const std::filesystem::path& path, const DualDecoderNet& net,
                         const TrainState& state, const TrainConfig& config) {
  json hist = json::array();
  for (const auto& r : state.history) {
    hist.push_back({{"epoch", r.epoch},
                    {"train_loss", r.train_loss},
                    {"val_loss", std::isnan(r.val_loss) ? json(nullptr) : json(r.val_loss)}});
  }
  json meta{{"kind", "train"},
            {"net", net.config()},
            {"train", config},
            {"epochs_done", state.epochs_done},
            {"best_epoch", state.best_epoch},
            {"best_val", std::isfinite(state.best_val) ? json(state.best_val) : json(nullptr)},
            {"history", hist}};
  ad::save_checkpoint(path, net.registry(), &state.adam, meta);
  ad::save_checkpoint(best_checkpoint_path(path), state.best, nullptr,
                      {{"kind", "best"}, {"net", net.config()}, {"epoch", state.best_epoch}});
}

TrainState load_training_state(const std::filesystem::path& path, DualDecoderNet& net) {
  const ad::LoadedCheckpoint ck = ad::load_checkpoint(path, net.registry());
  const json& meta = ck.metadata;
  if (meta.value("kind", "") != "train" || !ck.adam) {
    throw IoError("checkpoint " + path.string() + " does not hold a resumable training run");
  }
  TrainState st;
  st.adam = *ck.adam;
  st.epochs_done = meta.at("epochs_done").get<int>();
  st.best_epoch = meta.at("best_epoch").get<int>();
  st.best_val = meta.at("best_val").is_null() ? std::numeric_limits<double>::infinity()
                                              : meta.at("best_val").get<double>();
  for (const auto& r : meta.at("history")) {
    st.history.push_back({r.at("epoch").get<int>(), r.at("train_loss").get<double>(),
                          r.at("val_loss").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                     : r.at("val_loss").get<double>()});
  }
  st.best = net.registry().clone();
  ad::load_checkpoint(best_checkpoint_path(path), st.best);
  return st;
}

void save_model(const std::filesystem::path& path, const DualDecoderNet& net, const json& extra) {
  json meta{{"kind", "model"}, {"net", net.config()}};
  if (!extra.is_null()) meta["extra"] = extra;
  ad::save_checkpoint(path, net.registry(), nullptr, meta);
}

std::unique_ptr<DualDecoderNet> load_model(const std::filesystem::path& path) {
  const json manifest = ad::read_checkpoint_manifest(path);
  const json meta = manifest.value("metadata", json::object());
  if (!meta.contains("net")) {
    throw IoError("checkpoint " + path.string() + " carries no network configuration");
  }
  auto net = std::make_unique<DualDecoderNet>(meta.at("net").get<NetConfig>());
  ad::load_checkpoint(path, net->registry());
  return net;
}

TrainResult train_supervised(DualDecoderNet& net, const std::vector<CorpusMember>& corpus,
                             const TrainConfig& config) {
  SupervisedTrainer trainer(net, corpus, config);
  trainer.train();
  TrainResult res{trainer.state().history, trainer.state().best_epoch, trainer.state().best_val};
  if (res.best_epoch > 0) net.registry().copy_values_from(trainer.state().best);
  return res;
}

std::string to_string(ViVariant v) { return v == ViVariant::VI1 ? "vi1" : "vi2"; }

ViVariant vi_variant_from_string(const std::string& s) {
  if (s == "vi1") return ViVariant::VI1;
  if (s == "vi2") return ViVariant::VI2;
  throw ConfigError("unknown VI variant '" + s + "' (expected vi1 or vi2)");
}

void ViConfig::validate() const {
  if (K < 1) throw ConfigError("K must be >= 1");
  if (lambda < 0.0) throw ConfigError("lambda must be non-negative");
  if (iterations < 0) throw ConfigError("iterations must be non-negative");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
}

void to_json(json& j, const ViConfig& c) {
  j = json{{"K", c.K},           {"lambda", c.lambda},
           {"iterations", c.iterations}, {"lr", c.lr},
           {"variant", to_string(c.variant)}, {"seed", c.seed}};
}

void from_json(const json& j, ViConfig& c) {
  c.K = j.value("K", c.K);
  c.lambda = j.value("lambda", c.lambda);
  c.iterations = j.value("iterations", c.iterations);
  c.lr = j.value("lr", c.lr);
  if (j.contains("variant")) c.variant = vi_variant_from_string(j["variant"].get<std::string>());
  c.seed = j.value("seed", c.seed);
  c.validate();
}

EpsDraws vi_draws(const ViConfig& config, const Dims& dims, int iteration, std::size_t field) {
  const std::uint64_t s = derive_seed(derive_seed(config.seed, std::uint64_t(iteration)), field);
  return EpsDraws({1, 1, dims.nx, dims.ny, dims.nz}, config.K, s);
}

ViResult finetune_vi(DualDecoderNet& net, const std::vector<ViField>& fields, const ViConfig& config,
                     const std::function<void(int, double)>& on_iteration) {
  config.validate();
  ViResult res;
  if (config.iterations == 0) return res;
  if (fields.empty()) throw ConfigError("fine-tuning needs at least one field");
  const double lambda = config.variant == ViVariant::VI1 ? config.lambda : 0.0;
  auto& reg = net.registry();
  ad::AdamState adam = ad::make_adam(reg, config.lr);
  for (int it = 0; it < config.iterations; ++it) {
    reg.zero_grad();
    Tensor total;
    for (std::size_t f = 0; f < fields.size(); ++f) {
      const EpsDraws eps = vi_draws(config, fields[f].field.dims(), it, f);
      const Tensor l = vi1_loss(net, fields[f].field, fields[f].physics, lambda, eps);
      total = total.defined() ? ad::add(total, l) : l;
    }
    const Tensor loss = ad::scale(total, 1.0 / static_cast<double>(fields.size()));
    require_finite_loss(loss.item(), "at fine-tuning iteration " + std::to_string(it + 1));
    ad::backward(loss);
    ad::adam_step(adam, reg);
    res.history.push_back(loss.item());
    if (on_iteration) on_iteration(it + 1, loss.item());
  }
  return res;
}

Inference infer(DualDecoderNet& net, const Volume3D& b, const InferOptions& options) {
  PosteriorGaussian post;
  if (!options.patches) {
    post = forward_posterior(net, b);
  } else {
    std::vector<Patch> mu;
    std::vector<Patch> lv;
    for (const Patch& p : extract_patches(b, options.patch, options.stride)) {
      PosteriorGaussian q = forward_posterior(net, p.data);
      mu.push_back({p.origin, std::move(q.mu)});
      lv.push_back({p.origin, std::move(q.log_var)});
    }
    post.mu = stitch_patches(mu, b.dims(), b.voxel_size());
    post.log_var = stitch_patches(lv, b.dims(), b.voxel_size());
  }
  Volume3D sigma = post.sigma();
  return {std::move(post.mu), std::move(sigma), std::move(post.log_var)};
}

}  // namespace qsmlab::pdi
