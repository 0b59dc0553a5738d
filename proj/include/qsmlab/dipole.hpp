#pragma once

#include <array>
#include <cstdint>

#include "qsmlab/volume.hpp"

namespace qsmlab {

using Vec3 = std::array<double, 3>;

/// Fourier-space dipole kernel D(k) = 1/3 - (k.B0)^2 / |k|^2 with D(0) = 0.
/// Values lie in [-2/3, 1/3] and D is even in k, so the operator is self-adjoint.
struct DipoleKernel {
  Volume3D D;
  Vec3 b0_direction{0.0, 0.0, 1.0};

  const Dims& dims() const { return D.dims(); }
};

/// Signed frequency (cycles per mm) of DFT bin `i` on an axis of `n` samples.
double bin_frequency(std::size_t i, std::size_t n, double spacing);

DipoleKernel build_dipole_kernel(const Dims& dims, const VoxelSize& voxel_size,
                                 Vec3 b0_direction = {0.0, 0.0, 1.0});

// b = real(ifft3(D * fft3(chi))). Throws NumericalError if the imaginary
// residue exceeds 1e-10 of the signal norm.
Volume3D forward_field(const Volume3D& chi, const DipoleKernel& kernel);

// Closed-form field of a uniformly magnetised sphere, Lorentz-corrected:
// (dchi/3) (a/r)^3 (3 cos^2(theta) - 1) outside, 0 inside. Center in voxel
// coordinates, radius in mm.
Volume3D sphere_analytic_field(const Dims& dims, const VoxelSize& voxel_size, const Vec3& center,
                               double radius, double delta_chi,
                               Vec3 b0_direction = {0.0, 0.0, 1.0});

/// Per-voxel Gaussian measurement noise, sigma in ppm.
struct NoiseModel {
  Volume3D sigma;
  std::uint64_t seed = 0;
};

NoiseModel uniform_noise(const Dims& dims, const VoxelSize& voxel_size, double sigma,
                         std::uint64_t seed);

// sigma(v) = sigma0 (1 + alpha |chi(v)| / max|chi|) on lesion voxels, sigma0
// elsewhere.
NoiseModel lesion_coupled_noise(const Volume3D& chi_true, const Mask& lesion_mask, double sigma0,
                                double alpha, std::uint64_t seed);

Volume3D add_noise(const Volume3D& b, const NoiseModel& noise);

// W = 1/sigma so that ||W r||^2 = r^T Sigma^{-1} r.
Volume3D likelihood_weight(const NoiseModel& noise);

}  // namespace qsmlab
