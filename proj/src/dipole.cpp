#include "qsmlab/dipole.hpp"

#include <cmath>
#include <random>

namespace qsmlab {
namespace {

Vec3 normalized(Vec3 v) {
  const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  if (!(n > 0.0) || !std::isfinite(n)) throw ConfigError("B0 direction must be a nonzero vector");
  return {v[0] / n, v[1] / n, v[2] / n};
}

double raw_kernel(double kx, double ky, double kz, const Vec3& b0) {
  const double k2 = kx * kx + ky * ky + kz * kz;
  if (k2 == 0.0) return 0.0;
  const double proj = kx * b0[0] + ky * b0[1] + kz * b0[2];
  return 1.0 / 3.0 - proj * proj / k2;
}

}  // namespace

double bin_frequency(std::size_t i, std::size_t n, double spacing) {
  const auto half = static_cast<std::ptrdiff_t>((n + 1) / 2);
  auto signed_i = static_cast<std::ptrdiff_t>(i);
  if (signed_i >= half) signed_i -= static_cast<std::ptrdiff_t>(n);
  return static_cast<double>(signed_i) / (static_cast<double>(n) * spacing);
}

DipoleKernel build_dipole_kernel(const Dims& dims, const VoxelSize& voxel_size, Vec3 b0_direction) {
  validate_dims(dims);
  validate_voxel_size(voxel_size);
  if (dims.nx < 2 || dims.ny < 2 || dims.nz < 2) {
    throw DimensionError("dipole kernel needs at least 2 voxels per axis");
  }
  const Vec3 b0 = normalized(b0_direction);
  DipoleKernel kernel{Volume3D(dims, voxel_size), b0};
  for (std::size_t x = 0; x < dims.nx; ++x) {
    const double kx = bin_frequency(x, dims.nx, voxel_size.dx);
    // Mirror bin -k; the Nyquist bin of an even axis maps onto itself with the
    // same signed frequency, so average with the explicitly negated vector.
    for (std::size_t y = 0; y < dims.ny; ++y) {
      const double ky = bin_frequency(y, dims.ny, voxel_size.dy);
      for (std::size_t z = 0; z < dims.nz; ++z) {
        const double kz = bin_frequency(z, dims.nz, voxel_size.dz);
        const std::size_t mx = (dims.nx - x) % dims.nx;
        const std::size_t my = (dims.ny - y) % dims.ny;
        const std::size_t mz = (dims.nz - z) % dims.nz;
        const double d0 = raw_kernel(kx, ky, kz, b0);
        const double d1 = raw_kernel(bin_frequency(mx, dims.nx, voxel_size.dx),
                                     bin_frequency(my, dims.ny, voxel_size.dy),
                                     bin_frequency(mz, dims.nz, voxel_size.dz), b0);
        kernel.D.at(x, y, z) = d0 == d1 ? d0 : 0.5 * (d0 + d1);
      }
    }
  }
  return kernel;
}

Volume3D forward_field(const Volume3D& chi, const DipoleKernel& kernel) {
  require_same_grid(chi, kernel.D, "forward_field");
  ComplexVolume3D spectrum = fft3(chi);
  for (std::size_t i = 0; i < spectrum.size(); ++i) spectrum[i] *= kernel.D[i];
  const ComplexVolume3D field = ifft3(spectrum);
  double re2 = 0.0;
  double im2 = 0.0;
  Volume3D out(chi.dims(), chi.voxel_size());
  for (std::size_t i = 0; i < field.size(); ++i) {
    out[i] = field[i].real();
    re2 += field[i].real() * field[i].real();
    im2 += field[i].imag() * field[i].imag();
  }
  if (std::sqrt(im2) > 1e-10 * std::sqrt(re2) + 1e-300) {
    throw NumericalError("forward_field: imaginary residue exceeds tolerance");
  }
  return out;
}

Volume3D sphere_analytic_field(const Dims& dims, const VoxelSize& voxel_size, const Vec3& center,
                               double radius, double delta_chi, Vec3 b0_direction) {
  validate_dims(dims);
  validate_voxel_size(voxel_size);
  if (!(radius > 0.0)) throw ConfigError("sphere radius must be positive");
  const Vec3 b0 = normalized(b0_direction);
  const std::array<double, 3> extent{dims.nx * voxel_size.dx, dims.ny * voxel_size.dy,
                                     dims.nz * voxel_size.dz};
  const std::array<double, 3> c_mm{center[0] * voxel_size.dx, center[1] * voxel_size.dy,
                                   center[2] * voxel_size.dz};
  for (int a = 0; a < 3; ++a) {
    if (c_mm[a] - 2.0 * radius < 0.0 || c_mm[a] + 2.0 * radius > extent[a]) {
      throw ConfigError("sphere (with margin of one radius) lies outside the volume");
    }
  }
  Volume3D out(dims, voxel_size);
  const double a3 = radius * radius * radius;
  for (std::size_t x = 0; x < dims.nx; ++x) {
    for (std::size_t y = 0; y < dims.ny; ++y) {
      for (std::size_t z = 0; z < dims.nz; ++z) {
        const double rx = x * voxel_size.dx - c_mm[0];
        const double ry = y * voxel_size.dy - c_mm[1];
        const double rz = z * voxel_size.dz - c_mm[2];
        const double r2 = rx * rx + ry * ry + rz * rz;
        if (r2 <= radius * radius) continue;
        const double r = std::sqrt(r2);
        const double cos_t = (rx * b0[0] + ry * b0[1] + rz * b0[2]) / r;
        out.at(x, y, z) = delta_chi / 3.0 * a3 / (r2 * r) * (3.0 * cos_t * cos_t - 1.0);
      }
    }
  }
  return out;
}

NoiseModel uniform_noise(const Dims& dims, const VoxelSize& voxel_size, double sigma,
                         std::uint64_t seed) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("noise sigma must be positive");
  return {Volume3D(dims, voxel_size, sigma), seed};
}

NoiseModel lesion_coupled_noise(const Volume3D& chi_true, const Mask& lesion_mask, double sigma0,
                                double alpha, std::uint64_t seed) {
  require_same_grid(chi_true, lesion_mask.values(), "lesion_coupled_noise");
  if (!(sigma0 > 0.0)) throw ConfigError("sigma0 must be positive");
  if (alpha < 0.0) throw ConfigError("lesion noise coupling alpha must be non-negative");
  const double peak = max_abs(chi_true);
  NoiseModel noise{Volume3D(chi_true.dims(), chi_true.voxel_size(), sigma0), seed};
  if (peak == 0.0) return noise;
  for (std::size_t i = 0; i < chi_true.size(); ++i) {
    if (lesion_mask[i] > 0.0) {
      noise.sigma[i] = sigma0 * (1.0 + alpha * std::abs(chi_true[i]) / peak);
    }
  }
  return noise;
}

Volume3D add_noise(const Volume3D& b, const NoiseModel& noise) {
  require_same_grid(b, noise.sigma, "add_noise");
  std::mt19937_64 rng(noise.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Volume3D out = b;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += noise.sigma[i] * normal(rng);
  return out;
}

Volume3D likelihood_weight(const NoiseModel& noise) {
  Volume3D w = noise.sigma;
  for (double& v : w.data()) {
    if (!(v > 0.0)) throw ConfigError("noise sigma must be strictly positive everywhere");
    v = 1.0 / v;
    if (!std::isfinite(v)) throw NumericalError("likelihood weight overflow");
  }
  return w;
}

}  // namespace qsmlab
