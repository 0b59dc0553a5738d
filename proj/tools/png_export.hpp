#pragma once

#include <filesystem>

#include "qsmlab/volume.hpp"

namespace qsmlab::cli {

// 8-bit grayscale axial slice (x down, y across) with values clipped to
// [lo, hi].
void write_slice_png(const std::filesystem::path& path, const Volume3D& v, std::size_t z, double lo,
                     double hi);

}  // namespace qsmlab::cli
