#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "qsmlab/dipole.hpp"
#include "qsmlab/network.hpp"
#include "qsmlab/volume.hpp"

namespace qsmlab::pdi {

/// Diagonal Gaussian over susceptibility. log_var is in log ppm^2 and already
/// clamped to [kLogVarMin, kLogVarMax].
struct PosteriorGaussian {
  Volume3D mu;
  Volume3D log_var;

  Volume3D sigma2() const;
  Volume3D sigma() const;
};

// Eval-mode forward pass without graph recording.
PosteriorGaussian forward_posterior(DualDecoderNet& net, const Volume3D& b);

// Mean over voxels of 1/2 [(chi - mu)^2 / sigma^2 + log sigma^2].
double gaussian_nll(const PosteriorGaussian& post, const Volume3D& chi_label);
Tensor gaussian_nll(const Tensor& mu, const Tensor& log_var, const Tensor& chi_label);

// mu + exp(log_var / 2) * eps.
Volume3D reparameterize(const PosteriorGaussian& post, const Volume3D& eps);
Tensor reparameterize(const Tensor& mu, const Tensor& log_var, const Tensor& eps);

/// Standard-normal draws for Monte-Carlo estimates. Draw k is generated from
/// its own stream of the seed, so any subset is reproducible; explicit draws
/// may be supplied instead.
class EpsDraws {
 public:
  EpsDraws(ad::Shape shape, int count, std::uint64_t seed);
  explicit EpsDraws(std::vector<Tensor> draws);

  int count() const { return count_; }
  const ad::Shape& shape() const { return shape_; }
  Tensor draw(int k) const;

 private:
  ad::Shape shape_;
  int count_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<Tensor> explicit_;
};

/// Fixed physics of one observed field: kernel, inverse noise variance, TV
/// edge weight.
struct ViPhysics {
  DipoleKernel kernel;
  Volume3D inv_noise_var;  // 1 / sigma_b^2
  Volume3D edge_weight;    // M

  static ViPhysics from_noise(const DipoleKernel& kernel, const NoiseModel& noise,
                              const std::optional<Mask>& edge_weight = std::nullopt);
};

// Dipole convolution of every batch item; self-adjoint.
Tensor dipole_convolve(const Tensor& chi, const DipoleKernel& kernel);
// sum_axes sum_voxels M |grad chi| for a (1, 1, X, Y, Z) tensor.
Tensor weighted_tv(const Tensor& chi, const Volume3D& edge_weight, const VoxelSize& vs);

/// Per-field VI objective terms, each a scalar summed over voxels:
///   entropy    = -1/2 sum log_var
///   prior      = 1/(2K) sum_k lambda ||M grad chi_k||_1
///   likelihood = 1/(2K) sum_k (A chi_k - b)^T Sigma_b^{-1} (A chi_k - b)
/// total = (entropy + prior + likelihood) / N voxels.
struct ViTerms {
  Tensor entropy;
  Tensor prior;  // undefined when lambda == 0
  Tensor likelihood;
  Tensor total;
};

ViTerms vi_terms(const Tensor& mu, const Tensor& log_var, const Tensor& b, const ViPhysics& physics,
                 double lambda, const EpsDraws& eps, const VoxelSize& vs);

// Runs the network on b (frozen normalisation) and assembles the objective.
// The TV-prior variant; lambda = 0 reproduces vi2_loss exactly.
Tensor vi1_loss(DualDecoderNet& net, const Volume3D& b, const ViPhysics& physics, double lambda,
                const EpsDraws& eps);
// Flat prior.
Tensor vi2_loss(DualDecoderNet& net, const Volume3D& b, const ViPhysics& physics,
                const EpsDraws& eps);

}  // namespace qsmlab::pdi
