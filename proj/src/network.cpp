#include "qsmlab/network.hpp"

#include <cmath>
#include <nlohmann/json.hpp>
#include <random>

namespace qsmlab::pdi {
using nlohmann::json;

void NetConfig::validate() const {
  if (depth < 1) throw ConfigError("network depth must be >= 1");
  if (static_cast<int>(filters.size()) != depth) {
    throw ConfigError("filters list length must equal depth");
  }
  for (int f : filters)
    if (f < 1) throw ConfigError("filter counts must be positive");
  if (kernel_size < 1 || kernel_size % 2 == 0) throw ConfigError("kernel size must be odd");
  if (in_channels < 1 || convs_per_level < 1) throw ConfigError("invalid channel/conv counts");
  if (init_log_var < kLogVarMin || init_log_var > kLogVarMax) {
    throw ConfigError("init_log_var outside the log-variance clamp range");
  }
}

void to_json(json& j, const NetConfig& c) {
  j = json{{"depth", c.depth},
           {"filters", c.filters},
           {"kernel_size", c.kernel_size},
           {"in_channels", c.in_channels},
           {"convs_per_level", c.convs_per_level},
           {"norm", c.batch_norm ? "batch" : "none"},
           {"patch", c.patch.as_array()},
           {"init_log_var", c.init_log_var},
           {"seed", c.seed}};
}

void from_json(const json& j, NetConfig& c) {
  c.depth = j.value("depth", c.depth);
  c.filters = j.value("filters", c.filters);
  c.kernel_size = j.value("kernel_size", c.kernel_size);
  c.in_channels = j.value("in_channels", c.in_channels);
  c.convs_per_level = j.value("convs_per_level", c.convs_per_level);
  const std::string norm = j.value("norm", std::string(c.batch_norm ? "batch" : "none"));
  if (norm != "batch" && norm != "none") throw ConfigError("norm must be 'batch' or 'none'");
  c.batch_norm = norm == "batch";
  if (j.contains("patch")) {
    const auto p = j["patch"].get<std::vector<std::size_t>>();
    if (p.size() != 3) throw ConfigError("patch must have three entries");
    c.patch = {p[0], p[1], p[2]};
  }
  c.init_log_var = j.value("init_log_var", c.init_log_var);
  c.seed = j.value("seed", c.seed);
  c.validate();
}

namespace {

std::vector<double> normal_values(std::mt19937_64& rng, std::size_t n, double sd) {
  std::normal_distribution<double> normal(0.0, sd);
  std::vector<double> v(n);
  for (double& x : v) x = normal(rng);
  return v;
}

}  // namespace

DualDecoderNet::DualDecoderNet(NetConfig config) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(config_.seed);
  const int k = config_.kernel_size;
  const int depth = config_.depth;
  const auto& f = config_.filters;

  auto conv = [&](const std::string& name, int cin, int cout, int ks) {
    ConvUnit u;
    const std::size_t fan_in = static_cast<std::size_t>(cin) * ks * ks * ks;
    u.weight = registry_.add_parameter(
        name + ".weight",
        Tensor::from({std::size_t(cout), std::size_t(cin), std::size_t(ks), std::size_t(ks), std::size_t(ks)},
                     normal_values(rng, std::size_t(cout) * fan_in, std::sqrt(2.0 / double(fan_in)))));
    u.bias = registry_.add_parameter(name + ".bias", Tensor::zeros({std::size_t(cout)}));
    if (config_.batch_norm) {
      u.gamma = registry_.add_parameter(name + ".bn.gamma", Tensor::full({std::size_t(cout)}, 1.0));
      u.beta = registry_.add_parameter(name + ".bn.beta", Tensor::zeros({std::size_t(cout)}));
      u.stats.mean = registry_.add_buffer(name + ".bn.running_mean", Tensor::zeros({std::size_t(cout)}));
      u.stats.var = registry_.add_buffer(name + ".bn.running_var", Tensor::full({std::size_t(cout)}, 1.0));
    }
    return u;
  };
  auto up = [&](const std::string& name, int cin, int cout) {
    UpUnit u;
    u.weight = registry_.add_parameter(
        name + ".weight",
        Tensor::from({std::size_t(cin), std::size_t(cout), 2, 2, 2},
                     normal_values(rng, std::size_t(cin) * cout * 8, std::sqrt(2.0 / double(cin)))));
    u.bias = registry_.add_parameter(name + ".bias", Tensor::zeros({std::size_t(cout)}));
    return u;
  };

  int cin = config_.in_channels;
  for (int l = 0; l < depth; ++l) {
    std::vector<ConvUnit> level;
    for (int c = 0; c < config_.convs_per_level; ++c) {
      level.push_back(conv("enc" + std::to_string(l) + ".conv" + std::to_string(c),
                           c == 0 ? cin : f[l], f[l], k));
    }
    encoder_.push_back(std::move(level));
    cin = f[l];
  }

  auto build_decoder = [&](Decoder& dec, const std::string& prefix, double head_bias) {
    for (int l = depth - 2; l >= 0; --l) {
      const std::string name = prefix + std::to_string(l);
      dec.up.push_back(up(name + ".up", f[l + 1], f[l]));
      std::vector<ConvUnit> level;
      for (int c = 0; c < config_.convs_per_level; ++c) {
        level.push_back(conv(name + ".conv" + std::to_string(c), c == 0 ? 2 * f[l] : f[l], f[l], k));
      }
      dec.conv.push_back(std::move(level));
    }
    // 1x1x1 output projection, small initial weights.
    dec.head_weight = registry_.add_parameter(
        prefix + ".head.weight",
        Tensor::from({1, std::size_t(f[0]), 1, 1, 1},
                     normal_values(rng, std::size_t(f[0]), 0.1 / std::sqrt(double(f[0])))));
    dec.head_bias = registry_.add_parameter(prefix + ".head.bias", Tensor::full({1}, head_bias));
  };
  build_decoder(mean_decoder_, "dec_mean", 0.0);
  build_decoder(var_decoder_, "dec_var", config_.init_log_var);
}

void DualDecoderNet::check_input_dims(const Dims& dims) const {
  const std::size_t factor = std::size_t{1} << (config_.depth - 1);
  if (dims.nx % factor || dims.ny % factor || dims.nz % factor) {
    throw DimensionError("input dims " + to_string(dims) + " must be divisible by " +
                         std::to_string(factor));
  }
}

Tensor DualDecoderNet::apply(ConvUnit& unit, const Tensor& x, NormMode mode) const {
  Tensor y = ad::conv3(x, unit.weight, unit.bias);
  if (config_.batch_norm) y = ad::batchnorm3(y, unit.gamma, unit.beta, unit.stats, mode);
  return ad::relu(y);
}

Tensor DualDecoderNet::run_decoder(Decoder& dec, const Tensor& bottom,
                                   const std::vector<Tensor>& skips, NormMode mode) const {
  Tensor x = bottom;
  for (std::size_t i = 0; i < dec.up.size(); ++i) {
    const std::size_t level = skips.size() - 1 - i;
    Tensor u = ad::conv3_transposed(x, dec.up[i].weight, dec.up[i].bias);
    x = ad::concat({skips[level], u});
    for (auto& unit : dec.conv[i]) x = apply(unit, x, mode);
  }
  return ad::conv3(x, dec.head_weight, dec.head_bias, 1, 0);
}

DualDecoderNet::Output DualDecoderNet::forward(const Tensor& input, NormMode mode) {
  if (input.rank() != 5 || input.dim(1) != std::size_t(config_.in_channels)) {
    throw DimensionError("network input must be (N, " + std::to_string(config_.in_channels) +
                         ", X, Y, Z), got " + ad::to_string(input.shape()));
  }
  check_input_dims({input.dim(2), input.dim(3), input.dim(4)});
  std::vector<Tensor> skips;
  Tensor x = input;
  for (std::size_t l = 0; l < encoder_.size(); ++l) {
    if (l > 0) x = ad::maxpool3(x);
    for (auto& unit : encoder_[l]) x = apply(unit, x, mode);
    if (l + 1 < encoder_.size()) skips.push_back(x);
  }
  Output out;
  out.mu = run_decoder(mean_decoder_, x, skips, mode);
  out.log_var = ad::clamp(run_decoder(var_decoder_, x, skips, mode), kLogVarMin, kLogVarMax);
  return out;
}

std::size_t expected_parameter_count(const NetConfig& c) {
  c.validate();
  const std::size_t k3 = std::size_t(c.kernel_size) * c.kernel_size * c.kernel_size;
  const std::size_t bn = c.batch_norm ? 2 : 0;
  auto conv = [&](std::size_t cin, std::size_t cout) { return cout * cin * k3 + cout + bn * cout; };
  std::size_t total = 0;
  std::size_t cin = std::size_t(c.in_channels);
  for (int l = 0; l < c.depth; ++l) {
    const std::size_t fl = std::size_t(c.filters[l]);
    for (int i = 0; i < c.convs_per_level; ++i) total += conv(i == 0 ? cin : fl, fl);
    cin = fl;
  }
  std::size_t decoder = 0;
  for (int l = c.depth - 2; l >= 0; --l) {
    const std::size_t fl = std::size_t(c.filters[l]);
    const std::size_t fu = std::size_t(c.filters[l + 1]);
    decoder += fu * fl * 8 + fl;  // transposed conv
    for (int i = 0; i < c.convs_per_level; ++i) decoder += conv(i == 0 ? 2 * fl : fl, fl);
  }
  decoder += std::size_t(c.filters[0]) + 1;  // head
  return total + 2 * decoder;
}

Tensor volume_to_tensor(const Volume3D& v, bool requires_grad) {
  const Dims& d = v.dims();
  return Tensor::from({1, 1, d.nx, d.ny, d.nz}, v.values(), requires_grad);
}

Tensor volumes_to_batch(const std::vector<const Volume3D*>& vols) {
  if (vols.empty()) throw DimensionError("empty batch");
  const Dims d = vols.front()->dims();
  std::vector<double> values;
  values.reserve(vols.size() * d.size());
  for (const Volume3D* v : vols) {
    if (v->dims() != d) throw DimensionError("batch members differ in dims");
    values.insert(values.end(), v->data().begin(), v->data().end());
  }
  return Tensor::from({vols.size(), 1, d.nx, d.ny, d.nz}, std::move(values));
}

Volume3D tensor_to_volume(const Tensor& t, const VoxelSize& voxel_size, std::size_t batch) {
  if (t.rank() != 5 || t.dim(1) != 1 || batch >= t.dim(0)) {
    throw DimensionError("expected a single-channel rank-5 tensor");
  }
  const Dims d{t.dim(2), t.dim(3), t.dim(4)};
  const auto begin = t.values().begin() + static_cast<std::ptrdiff_t>(batch * d.size());
  return Volume3D(d, voxel_size, std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(d.size())));
}

}  // namespace qsmlab::pdi
