#include "qsmlab/volume.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace qsmlab {

std::string to_string(const Dims& d) {
  return "(" + std::to_string(d.nx) + ", " + std::to_string(d.ny) + ", " + std::to_string(d.nz) +
         ")";
}

void validate_dims(const Dims& d) {
  if (d.nx == 0 || d.ny == 0 || d.nz == 0) {
    throw DimensionError("degenerate volume dims " + to_string(d));
  }
  constexpr auto kMax = static_cast<std::size_t>(std::numeric_limits<int>::max());
  if (d.nx > kMax || d.ny > kMax || d.nz > kMax || d.nx > kMax / d.ny ||
      d.nx * d.ny > kMax / d.nz) {
    throw DimensionError("volume dims overflow " + to_string(d));
  }
}

void validate_voxel_size(const VoxelSize& v) {
  if (!(v.dx > 0.0 && v.dy > 0.0 && v.dz > 0.0) || !std::isfinite(v.dx) ||
      !std::isfinite(v.dy) || !std::isfinite(v.dz)) {
    throw ConfigError("voxel size must be strictly positive and finite");
  }
}

Volume3D::Volume3D(Dims dims, VoxelSize voxel_size, double fill)
    : dims_(dims), voxel_size_(voxel_size) {
  validate_dims(dims_);
  validate_voxel_size(voxel_size_);
  data_.assign(dims_.size(), fill);
}

Volume3D::Volume3D(Dims dims, VoxelSize voxel_size, std::vector<double> data)
    : dims_(dims), voxel_size_(voxel_size), data_(std::move(data)) {
  validate_dims(dims_);
  validate_voxel_size(voxel_size_);
  if (data_.size() != dims_.size()) {
    throw DimensionError("volume payload has " + std::to_string(data_.size()) +
                         " values, dims " + to_string(dims_) + " need " +
                         std::to_string(dims_.size()));
  }
}

bool Volume3D::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void require_same_grid(const Volume3D& a, const Volume3D& b, const char* what) {
  if (!a.same_grid(b)) {
    throw DimensionError(std::string(what) + ": dims " + to_string(a.dims()) + " vs " +
                         to_string(b.dims()));
  }
}

Volume3D& Volume3D::operator+=(const Volume3D& rhs) {
  require_same_grid(*this, rhs, "volume +=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += rhs.data_[i];
  return *this;
}

Volume3D& Volume3D::operator-=(const Volume3D& rhs) {
  require_same_grid(*this, rhs, "volume -=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= rhs.data_[i];
  return *this;
}

Volume3D& Volume3D::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Volume3D operator+(Volume3D lhs, const Volume3D& rhs) { return lhs += rhs; }
Volume3D operator-(Volume3D lhs, const Volume3D& rhs) { return lhs -= rhs; }
Volume3D operator*(Volume3D lhs, double s) { return lhs *= s; }
Volume3D operator*(double s, Volume3D rhs) { return rhs *= s; }

Volume3D hadamard(const Volume3D& a, const Volume3D& b) {
  require_same_grid(a, b, "hadamard");
  Volume3D out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

double dot(const Volume3D& a, const Volume3D& b) {
  require_same_grid(a, b, "dot");
  return std::inner_product(a.data().begin(), a.data().end(), b.data().begin(), 0.0);
}

double norm2(const Volume3D& a) { return std::sqrt(dot(a, a)); }

double sum(const Volume3D& a) { return std::accumulate(a.data().begin(), a.data().end(), 0.0); }

double max_abs(const Volume3D& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

ComplexVolume3D::ComplexVolume3D(Dims dims, VoxelSize voxel_size)
    : dims_(dims), voxel_size_(voxel_size) {
  validate_dims(dims_);
  data_.assign(dims_.size(), value_type(0.0, 0.0));
}

ComplexVolume3D::ComplexVolume3D(const Volume3D& real)
    : dims_(real.dims()), voxel_size_(real.voxel_size()) {
  data_.resize(real.size());
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] = value_type(real[i], 0.0);
}

Volume3D ComplexVolume3D::real() const {
  Volume3D out(dims_, voxel_size_);
  for (std::size_t i = 0; i < data_.size(); ++i) out[i] = data_[i].real();
  return out;
}

Volume3D ComplexVolume3D::imag() const {
  Volume3D out(dims_, voxel_size_);
  for (std::size_t i = 0; i < data_.size(); ++i) out[i] = data_[i].imag();
  return out;
}

std::string to_string(MaskRole role) {
  switch (role) {
    case MaskRole::Tissue: return "tissue";
    case MaskRole::Lesion: return "lesion";
    case MaskRole::EdgeWeight: return "edge-weight";
  }
  return "tissue";
}

MaskRole mask_role_from_string(const std::string& s) {
  if (s == "tissue" || s == "tissue-mask") return MaskRole::Tissue;
  if (s == "lesion" || s == "lesion-mask") return MaskRole::Lesion;
  if (s == "edge-weight") return MaskRole::EdgeWeight;
  throw ConfigError("unknown mask role '" + s + "'");
}

Mask::Mask(Volume3D values, MaskRole role) : values_(std::move(values)), role_(role) {
  for (double v : values_.data()) {
    const bool ok = role_ == MaskRole::EdgeWeight ? (v >= 0.0 && v <= 1.0) : (v == 0.0 || v == 1.0);
    if (!ok) {
      throw ConfigError("mask value " + std::to_string(v) + " invalid for role " +
                        to_string(role_));
    }
  }
}

Mask Mask::ones(Dims dims, VoxelSize voxel_size, MaskRole role) {
  return Mask(Volume3D(dims, voxel_size, 1.0), role);
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(
      std::count_if(values_.data().begin(), values_.data().end(), [](double v) { return v > 0.0; }));
}

// ---------------------------------------------------------------------------

Gradient3D grad(const Volume3D& v) {
  const Dims& d = v.dims();
  if (d.nx < 2 || d.ny < 2 || d.nz < 2) {
    throw DimensionError("grad needs at least 2 voxels per axis, got " + to_string(d));
  }
  Gradient3D g{Volume3D(d, v.voxel_size()), Volume3D(d, v.voxel_size()),
               Volume3D(d, v.voxel_size())};
  for (std::size_t x = 0; x < d.nx; ++x) {
    const std::size_t xp = (x + 1) % d.nx;
    for (std::size_t y = 0; y < d.ny; ++y) {
      const std::size_t yp = (y + 1) % d.ny;
      for (std::size_t z = 0; z < d.nz; ++z) {
        const std::size_t zp = (z + 1) % d.nz;
        const double c = v.at(x, y, z);
        g.gx.at(x, y, z) = v.at(xp, y, z) - c;
        g.gy.at(x, y, z) = v.at(x, yp, z) - c;
        g.gz.at(x, y, z) = v.at(x, y, zp) - c;
      }
    }
  }
  return g;
}

Volume3D div(const Gradient3D& g) {
  require_same_grid(g.gx, g.gy, "div");
  require_same_grid(g.gx, g.gz, "div");
  const Dims& d = g.gx.dims();
  Volume3D out(d, g.gx.voxel_size());
  for (std::size_t x = 0; x < d.nx; ++x) {
    const std::size_t xm = (x + d.nx - 1) % d.nx;
    for (std::size_t y = 0; y < d.ny; ++y) {
      const std::size_t ym = (y + d.ny - 1) % d.ny;
      for (std::size_t z = 0; z < d.nz; ++z) {
        const std::size_t zm = (z + d.nz - 1) % d.nz;
        out.at(x, y, z) = (g.gx.at(x, y, z) - g.gx.at(xm, y, z)) +
                          (g.gy.at(x, y, z) - g.gy.at(x, ym, z)) +
                          (g.gz.at(x, y, z) - g.gz.at(x, y, zm));
      }
    }
  }
  return out;
}

}  // namespace qsmlab
