#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "qsmlab/error.hpp"

namespace qsmlab {

/// Grid extent. Storage is row-major with z varying fastest.
struct Dims {
  std::size_t nx = 0;
  std::size_t ny = 0;
  std::size_t nz = 0;

  std::size_t size() const { return nx * ny * nz; }
  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
    return (x * ny + y) * nz + z;
  }
  std::array<std::size_t, 3> as_array() const { return {nx, ny, nz}; }
  friend bool operator==(const Dims&, const Dims&) = default;
};

/// Voxel spacing in mm.
struct VoxelSize {
  double dx = 1.0;
  double dy = 1.0;
  double dz = 1.0;

  friend bool operator==(const VoxelSize&, const VoxelSize&) = default;
};

std::string to_string(const Dims& d);

// Throws DimensionError when any extent is zero or the voxel count overflows
// the index range used by the FFT backend.
void validate_dims(const Dims& d);
void validate_voxel_size(const VoxelSize& v);

/// Dense real-valued 3D field (susceptibility, local field, weights, masks).
class Volume3D {
 public:
  Volume3D() = default;
  Volume3D(Dims dims, VoxelSize voxel_size, double fill = 0.0);
  Volume3D(Dims dims, VoxelSize voxel_size, std::vector<double> data);

  const Dims& dims() const { return dims_; }
  const VoxelSize& voxel_size() const { return voxel_size_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t x, std::size_t y, std::size_t z) { return data_[dims_.index(x, y, z)]; }
  double at(std::size_t x, std::size_t y, std::size_t z) const {
    return data_[dims_.index(x, y, z)];
  }

  bool same_grid(const Volume3D& other) const { return dims_ == other.dims_; }
  bool all_finite() const;

  Volume3D& operator+=(const Volume3D& rhs);
  Volume3D& operator-=(const Volume3D& rhs);
  Volume3D& operator*=(double s);

 private:
  Dims dims_;
  VoxelSize voxel_size_;
  std::vector<double> data_;
};

Volume3D operator+(Volume3D lhs, const Volume3D& rhs);
Volume3D operator-(Volume3D lhs, const Volume3D& rhs);
Volume3D operator*(Volume3D lhs, double s);
Volume3D operator*(double s, Volume3D rhs);
// Elementwise product.
Volume3D hadamard(const Volume3D& a, const Volume3D& b);

double dot(const Volume3D& a, const Volume3D& b);
double norm2(const Volume3D& a);
double sum(const Volume3D& a);
double max_abs(const Volume3D& a);

// Throws DimensionError when the grids differ. `what` names the caller.
void require_same_grid(const Volume3D& a, const Volume3D& b, const char* what);

/// Fourier-domain companion of Volume3D.
class ComplexVolume3D {
 public:
  using value_type = std::complex<double>;

  ComplexVolume3D() = default;
  ComplexVolume3D(Dims dims, VoxelSize voxel_size);
  explicit ComplexVolume3D(const Volume3D& real);

  const Dims& dims() const { return dims_; }
  const VoxelSize& voxel_size() const { return voxel_size_; }
  std::size_t size() const { return data_.size(); }

  std::span<value_type> data() { return data_; }
  std::span<const value_type> data() const { return data_; }
  value_type& operator[](std::size_t i) { return data_[i]; }
  const value_type& operator[](std::size_t i) const { return data_[i]; }

  Volume3D real() const;
  Volume3D imag() const;

 private:
  Dims dims_;
  VoxelSize voxel_size_;
  std::vector<value_type> data_;
};

enum class MaskRole { Tissue, Lesion, EdgeWeight };

std::string to_string(MaskRole role);
MaskRole mask_role_from_string(const std::string& s);

/// Binary (tissue/lesion) or fractional (edge-weight) voxel mask.
class Mask {
 public:
  Mask() = default;
  // Validates values: {0,1} for tissue/lesion, [0,1] for edge weights.
  Mask(Volume3D values, MaskRole role);

  static Mask ones(Dims dims, VoxelSize voxel_size, MaskRole role);

  const Volume3D& values() const { return values_; }
  MaskRole role() const { return role_; }
  const Dims& dims() const { return values_.dims(); }
  double operator[](std::size_t i) const { return values_[i]; }
  std::size_t count() const;  // voxels with weight > 0

 private:
  Volume3D values_;
  MaskRole role_ = MaskRole::Tissue;
};

// ---------------------------------------------------------------------------
// Spectral transforms. Forward is unnormalized, inverse carries 1/N.

ComplexVolume3D fft3(const Volume3D& v);
ComplexVolume3D fft3(const ComplexVolume3D& v);
ComplexVolume3D ifft3(const ComplexVolume3D& v);

// ---------------------------------------------------------------------------
// Forward differences with periodic boundary, in units per voxel.

struct Gradient3D {
  Volume3D gx;
  Volume3D gy;
  Volume3D gz;

  Volume3D& operator[](int axis) { return axis == 0 ? gx : (axis == 1 ? gy : gz); }
  const Volume3D& operator[](int axis) const { return axis == 0 ? gx : (axis == 1 ? gy : gz); }
};

Gradient3D grad(const Volume3D& v);
// Negative adjoint of grad: <grad(v), w> == <v, -div(w)>.
Volume3D div(const Gradient3D& g);

}  // namespace qsmlab
