#pragma once

#include <filesystem>
#include <string>

#include "qsmlab/volume.hpp"

namespace qsmlab {

enum class DType { F32, F64 };

std::string to_string(DType t);
DType dtype_from_string(const std::string& s);

// Sidecar header of a `.qvol` pair: `<name>.json` + `<name>.bin`.
struct VolumeHeader {
  Dims dims;
  VoxelSize voxel_size;
  DType dtype = DType::F64;
  std::string order = "row-major-z-fastest";
  std::string role;
  bool complex = false;  // payload interleaves (re, im)

  friend bool operator==(const VolumeHeader&, const VolumeHeader&) = default;
};

// `path` may name the pair with or without a .json/.bin/.qvol suffix.
std::filesystem::path qvol_header_path(const std::filesystem::path& path);
std::filesystem::path qvol_payload_path(const std::filesystem::path& path);

void save_volume(const Volume3D& v, const std::filesystem::path& path, const std::string& role = "",
                 DType dtype = DType::F64);
void save_complex_volume(const ComplexVolume3D& v, const std::filesystem::path& path,
                         const std::string& role = "", DType dtype = DType::F64);

VolumeHeader load_volume_header(const std::filesystem::path& path);
Volume3D load_volume(const std::filesystem::path& path);
Volume3D load_volume(const std::filesystem::path& path, VolumeHeader& header);
ComplexVolume3D load_complex_volume(const std::filesystem::path& path);

void save_mask(const Mask& m, const std::filesystem::path& path);
Mask load_mask(const std::filesystem::path& path);

}  // namespace qsmlab
