#include "qsmlab/patches.hpp"

namespace qsmlab {

std::vector<std::size_t> patch_starts(std::size_t n, std::size_t patch, std::size_t stride) {
  if (patch == 0 || stride == 0) throw ConfigError("patch and stride must be positive");
  if (patch > n) {
    throw DimensionError("patch extent " + std::to_string(patch) + " exceeds volume extent " +
                         std::to_string(n));
  }
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + patch < n; s += stride) starts.push_back(s);
  starts.push_back(n - patch);
  return starts;
}

std::vector<Patch> extract_patches(const Volume3D& volume, const Dims& patch, const Dims& stride) {
  const Dims& d = volume.dims();
  const auto xs = patch_starts(d.nx, patch.nx, stride.nx);
  const auto ys = patch_starts(d.ny, patch.ny, stride.ny);
  const auto zs = patch_starts(d.nz, patch.nz, stride.nz);
  std::vector<Patch> out;
  out.reserve(xs.size() * ys.size() * zs.size());
  for (std::size_t x0 : xs)
    for (std::size_t y0 : ys)
      for (std::size_t z0 : zs) {
        Patch p{{x0, y0, z0}, Volume3D(patch, volume.voxel_size())};
        for (std::size_t x = 0; x < patch.nx; ++x)
          for (std::size_t y = 0; y < patch.ny; ++y) {
            const double* src = &volume.data()[d.index(x0 + x, y0 + y, z0)];
            std::copy(src, src + patch.nz, &p.data.data()[patch.index(x, y, 0)]);
          }
        out.push_back(std::move(p));
      }
  return out;
}

Volume3D stitch_patches(const std::vector<Patch>& patches, const Dims& dims,
                        const VoxelSize& voxel_size) {
  Volume3D acc(dims, voxel_size);
  std::vector<unsigned> hits(dims.size(), 0);
  for (const Patch& p : patches) {
    const Dims& pd = p.data.dims();
    if (p.origin[0] + pd.nx > dims.nx || p.origin[1] + pd.ny > dims.ny ||
        p.origin[2] + pd.nz > dims.nz) {
      throw DimensionError("patch extends beyond the stitched volume");
    }
    for (std::size_t x = 0; x < pd.nx; ++x)
      for (std::size_t y = 0; y < pd.ny; ++y)
        for (std::size_t z = 0; z < pd.nz; ++z) {
          const std::size_t i = dims.index(p.origin[0] + x, p.origin[1] + y, p.origin[2] + z);
          // Running mean: identical contributions reproduce the value exactly.
          acc[i] += (p.data.at(x, y, z) - acc[i]) / ++hits[i];
        }
  }
  for (std::size_t i = 0; i < acc.size(); ++i) {
    if (hits[i] == 0) throw DimensionError("patches do not cover the volume");
  }
  return acc;
}

}  // namespace qsmlab
