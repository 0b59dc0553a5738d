#include "qsmlab/posterior.hpp"

#include <cmath>
#include <memory>
#include <random>

#include "qsmlab/phantom.hpp"

namespace qsmlab::pdi {

Volume3D PosteriorGaussian::sigma2() const {
  Volume3D out = log_var;
  for (double& v : out.data()) v = std::exp(v);
  return out;
}

Volume3D PosteriorGaussian::sigma() const {
  Volume3D out = log_var;
  for (double& v : out.data()) v = std::exp(0.5 * v);
  return out;
}

PosteriorGaussian forward_posterior(DualDecoderNet& net, const Volume3D& b) {
  ad::NoGradGuard no_grad;
  const auto out = net.forward(volume_to_tensor(b), NormMode::Eval);
  return {tensor_to_volume(out.mu, b.voxel_size()), tensor_to_volume(out.log_var, b.voxel_size())};
}

double gaussian_nll(const PosteriorGaussian& post, const Volume3D& chi_label) {
  require_same_grid(post.mu, chi_label, "gaussian_nll");
  require_same_grid(post.mu, post.log_var, "gaussian_nll");
  double acc = 0.0;
  for (std::size_t i = 0; i < chi_label.size(); ++i) {
    const double r = chi_label[i] - post.mu[i];
    acc += 0.5 * (r * r * std::exp(-post.log_var[i]) + post.log_var[i]);
  }
  return acc / static_cast<double>(chi_label.size());
}

Tensor gaussian_nll(const Tensor& mu, const Tensor& log_var, const Tensor& chi_label) {
  using namespace ad;
  const Tensor r2 = square(sub(chi_label, mu));
  return scale(mean(add(mul(r2, exp(scale(log_var, -1.0))), log_var)), 0.5);
}

Volume3D reparameterize(const PosteriorGaussian& post, const Volume3D& eps) {
  require_same_grid(post.mu, eps, "reparameterize");
  Volume3D out = post.mu;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += std::exp(0.5 * post.log_var[i]) * eps[i];
  return out;
}

Tensor reparameterize(const Tensor& mu, const Tensor& log_var, const Tensor& eps) {
  using namespace ad;
  if (eps.shape() != mu.shape()) {
    throw DimensionError("eps shape " + ad::to_string(eps.shape()) + " does not match mu " +
                         ad::to_string(mu.shape()));
  }
  return add(mu, mul(exp(scale(log_var, 0.5)), eps));
}

EpsDraws::EpsDraws(ad::Shape shape, int count, std::uint64_t seed)
    : shape_(std::move(shape)), count_(count), seed_(seed) {
  if (count < 1) throw ConfigError("Monte-Carlo sample count must be >= 1");
}

EpsDraws::EpsDraws(std::vector<Tensor> draws) : explicit_(std::move(draws)) {
  if (explicit_.empty()) throw ConfigError("Monte-Carlo sample count must be >= 1");
  shape_ = explicit_.front().shape();
  for (const auto& t : explicit_)
    if (t.shape() != shape_) throw DimensionError("eps draws differ in shape");
  count_ = static_cast<int>(explicit_.size());
}

Tensor EpsDraws::draw(int k) const {
  if (k < 0 || k >= count_) throw DimensionError("eps draw index out of range");
  if (!explicit_.empty()) return explicit_[static_cast<std::size_t>(k)];
  std::mt19937_64 rng(derive_seed(seed_, static_cast<std::uint64_t>(k)));
  std::normal_distribution<double> normal;
  std::vector<double> v(ad::numel(shape_));
  for (double& x : v) x = normal(rng);
  return Tensor::from(shape_, std::move(v));
}

ViPhysics ViPhysics::from_noise(const DipoleKernel& kernel, const NoiseModel& noise,
                                const std::optional<Mask>& edge_weight) {
  require_same_grid(kernel.D, noise.sigma, "vi physics");
  ViPhysics p{kernel, noise.sigma, Volume3D(noise.sigma.dims(), noise.sigma.voxel_size(), 1.0)};
  for (double& v : p.inv_noise_var.data()) {
    if (!(v > 0.0)) throw ConfigError("noise sigma must be positive");
    v = 1.0 / (v * v);
  }
  if (edge_weight) {
    require_same_grid(kernel.D, edge_weight->values(), "vi physics edge weight");
    p.edge_weight = edge_weight->values();
  }
  return p;
}

namespace {

Dims spatial_dims(const Tensor& t) {
  if (t.rank() != 5 || t.dim(1) != 1) {
    throw DimensionError("expected (N, 1, X, Y, Z) tensor, got " + ad::to_string(t.shape()));
  }
  return {t.dim(2), t.dim(3), t.dim(4)};
}

Tensor constant_like(const Tensor& t, const Volume3D& v) {
  return Tensor::from(t.shape(), v.values());
}

}  // namespace

Tensor dipole_convolve(const Tensor& chi, const DipoleKernel& kernel) {
  const Dims d = spatial_dims(chi);
  if (d != kernel.dims()) throw DimensionError("dipole_convolve: tensor vs kernel dims");
  const std::size_t n = d.size();
  const VoxelSize vs = kernel.D.voxel_size();
  auto k = std::make_shared<const DipoleKernel>(kernel);
  ad::LinearFn apply = [k, d, n, vs](std::span<const double> in, std::span<double> out) {
    for (std::size_t b = 0; b * n < in.size(); ++b) {
      Volume3D x(d, vs, std::vector<double>(in.begin() + b * n, in.begin() + (b + 1) * n));
      const Volume3D y = forward_field(x, *k);
      std::copy(y.data().begin(), y.data().end(), out.begin() + b * n);
    }
  };
  return ad::linear_map(chi, chi.shape(), apply, apply, "dipole_convolve");
}

Tensor weighted_tv(const Tensor& chi, const Volume3D& edge_weight, const VoxelSize& vs) {
  const Dims d = spatial_dims(chi);
  if (chi.dim(0) != 1) throw DimensionError("weighted_tv expects a single batch item");
  require_same_grid(Volume3D(d, vs), edge_weight, "weighted_tv");
  const std::size_t n = d.size();
  ad::LinearFn forward = [d, n, vs](std::span<const double> in, std::span<double> out) {
    const Gradient3D g = grad(Volume3D(d, vs, std::vector<double>(in.begin(), in.end())));
    for (int a = 0; a < 3; ++a) std::copy(g[a].data().begin(), g[a].data().end(), out.begin() + a * n);
  };
  // Adjoint of the forward difference is the negative divergence.
  ad::LinearFn adjoint = [d, n, vs](std::span<const double> in, std::span<double> out) {
    Gradient3D g;
    for (int a = 0; a < 3; ++a) {
      g[a] = Volume3D(d, vs, std::vector<double>(in.begin() + a * n, in.begin() + (a + 1) * n));
    }
    const Volume3D dv = div(g);
    for (std::size_t i = 0; i < n; ++i) out[i] = -dv[i];
  };
  const Tensor g = ad::linear_map(chi, {3, d.nx, d.ny, d.nz}, forward, adjoint, "grad3");
  std::vector<double> m3;
  m3.reserve(3 * n);
  for (int a = 0; a < 3; ++a) m3.insert(m3.end(), edge_weight.data().begin(), edge_weight.data().end());
  return ad::sum(ad::mul(ad::abs(g), Tensor::from(g.shape(), std::move(m3))));
}

ViTerms vi_terms(const Tensor& mu, const Tensor& log_var, const Tensor& b, const ViPhysics& physics,
                 double lambda, const EpsDraws& eps, const VoxelSize& vs) {
  using namespace ad;
  const Dims d = spatial_dims(mu);
  if (mu.dim(0) != 1) throw DimensionError("vi_terms expects a single field");
  if (log_var.shape() != mu.shape() || b.shape() != mu.shape() || eps.shape() != mu.shape()) {
    throw DimensionError("vi_terms: mu, log_var, b and eps shapes differ");
  }
  if (d != physics.kernel.dims()) throw DimensionError("vi_terms: field vs kernel dims");
  if (lambda < 0.0) throw ConfigError("lambda must be non-negative");

  const Tensor w = constant_like(mu, physics.inv_noise_var);
  const double inv2k = 1.0 / (2.0 * eps.count());
  ViTerms t;
  t.entropy = scale(sum(log_var), -0.5);
  Tensor like;
  Tensor prior;
  for (int k = 0; k < eps.count(); ++k) {
    const Tensor chi = reparameterize(mu, log_var, eps.draw(k));
    const Tensor r = sub(dipole_convolve(chi, physics.kernel), b);
    const Tensor lk = sum(mul(square(r), w));
    like = like.defined() ? add(like, lk) : lk;
    if (lambda != 0.0) {
      const Tensor pk = weighted_tv(chi, physics.edge_weight, vs);
      prior = prior.defined() ? add(prior, pk) : pk;
    }
  }
  t.likelihood = scale(like, inv2k);
  Tensor total = add(t.entropy, t.likelihood);
  if (lambda != 0.0) {
    t.prior = scale(prior, lambda * inv2k);
    total = add(total, t.prior);
  }
  t.total = scale(total, 1.0 / static_cast<double>(d.size()));
  return t;
}

Tensor vi1_loss(DualDecoderNet& net, const Volume3D& b, const ViPhysics& physics, double lambda,
                const EpsDraws& eps) {
  const Tensor bt = volume_to_tensor(b);
  const auto out = net.forward(bt, NormMode::Eval);
  return vi_terms(out.mu, out.log_var, bt, physics, lambda, eps, b.voxel_size()).total;
}

Tensor vi2_loss(DualDecoderNet& net, const Volume3D& b, const ViPhysics& physics,
                const EpsDraws& eps) {
  return vi1_loss(net, b, physics, 0.0, eps);
}

}  // namespace qsmlab::pdi
