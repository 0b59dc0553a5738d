#pragma once

#include <cstdint>
#include <nlohmann/json_fwd.hpp>
#include <vector>

#include "qsmlab/ops.hpp"
#include "qsmlab/tensor.hpp"
#include "qsmlab/volume.hpp"

namespace qsmlab::pdi {

using ad::NormMode;
using ad::Tensor;

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 6.0;

/// Dual-decoder U-Net layout. filters[l] is the channel count of level l,
/// highest resolution first.
struct NetConfig {
  int depth = 3;
  std::vector<int> filters{8, 16, 32};
  int kernel_size = 3;
  int in_channels = 1;
  int convs_per_level = 2;
  bool batch_norm = true;
  Dims patch{64, 64, 32};
  double init_log_var = -4.0;  // bias of the variance head at initialisation
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const NetConfig& c);
void from_json(const nlohmann::json& j, NetConfig& c);

/// Shared encoder with two mirrored decoders producing the posterior mean and
/// log-variance maps. Both decoders receive skip connections from the encoder.
class DualDecoderNet {
 public:
  explicit DualDecoderNet(NetConfig config);

  struct Output {
    Tensor mu;       // (N, 1, X, Y, Z)
    Tensor log_var;  // clamped to [kLogVarMin, kLogVarMax]
  };

  // Train mode uses batch statistics (and updates running statistics); eval
  // mode uses the frozen running statistics.
  Output forward(const Tensor& input, NormMode mode);

  const NetConfig& config() const { return config_; }
  ad::ParameterRegistry& registry() { return registry_; }
  const ad::ParameterRegistry& registry() const { return registry_; }
  std::size_t parameter_count() const { return registry_.parameter_count(); }

  // Throws DimensionError unless every spatial extent divides 2^(depth-1).
  void check_input_dims(const Dims& dims) const;

 private:
  struct ConvUnit {
    Tensor weight;
    Tensor bias;
    Tensor gamma;
    Tensor beta;
    ad::RunningStats stats;
  };
  struct UpUnit {
    Tensor weight;
    Tensor bias;
  };
  struct Decoder {
    std::vector<UpUnit> up;                  // one per decoder level
    std::vector<std::vector<ConvUnit>> conv; // convs per decoder level
    Tensor head_weight;
    Tensor head_bias;
  };

  Tensor apply(ConvUnit& unit, const Tensor& x, NormMode mode) const;
  Tensor run_decoder(Decoder& dec, const Tensor& bottom, const std::vector<Tensor>& skips,
                     NormMode mode) const;

  NetConfig config_;
  ad::ParameterRegistry registry_;
  std::vector<std::vector<ConvUnit>> encoder_;
  Decoder mean_decoder_;
  Decoder var_decoder_;
};

// Closed-form parameter count for a configuration.
std::size_t expected_parameter_count(const NetConfig& config);

// (1, 1, nx, ny, nz) tensor view of a volume and back.
Tensor volume_to_tensor(const Volume3D& v, bool requires_grad = false);
Tensor volumes_to_batch(const std::vector<const Volume3D*>& vols);
Volume3D tensor_to_volume(const Tensor& t, const VoxelSize& voxel_size, std::size_t batch = 0);

}  // namespace qsmlab::pdi
