#pragma once

#include <array>
#include <vector>

#include "qsmlab/volume.hpp"

namespace qsmlab {

struct Patch {
  std::array<std::size_t, 3> origin{};
  Volume3D data;
};

// Patch origins along one axis: 0, stride, 2 stride, ... with the last patch
// snapped so it ends on the boundary.
std::vector<std::size_t> patch_starts(std::size_t n, std::size_t patch, std::size_t stride);

std::vector<Patch> extract_patches(const Volume3D& volume, const Dims& patch, const Dims& stride);

// Averages overlapping patches. Every voxel of `dims` must be covered.
Volume3D stitch_patches(const std::vector<Patch>& patches, const Dims& dims,
                        const VoxelSize& voxel_size);

}  // namespace qsmlab
