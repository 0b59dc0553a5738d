#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <string>
#include <vector>

#include "qsmlab/dipole.hpp"
#include "qsmlab/volume.hpp"

namespace qsmlab {

enum class Shape { Sphere, Cylinder, Cuboid };

std::string to_string(Shape s);
Shape shape_from_string(const std::string& s);

/// Geometric primitive in voxel coordinates.
/// size: sphere {radius}, cylinder {radius, half_length} along z,
/// cuboid {half_x, half_y, half_z}. Unused entries are ignored.
struct Primitive {
  Shape shape = Shape::Sphere;
  Vec3 center{0.0, 0.0, 0.0};
  Vec3 size{1.0, 1.0, 1.0};
  double delta_chi = 0.0;  // ppm

  bool contains(double x, double y, double z) const;
};

struct Texture {
  double amplitude = 0.0;            // ppm, std of the texture field
  double correlation_length = 4.0;   // voxels
};

struct Ellipsoid {
  Vec3 center{0.0, 0.0, 0.0};
  Vec3 semi_axes{1.0, 1.0, 1.0};

  bool contains(double x, double y, double z) const;
};

struct PhantomSpec {
  Dims dims{64, 64, 32};
  VoxelSize voxel_size{};
  std::vector<Primitive> primitives;
  double background_chi = 0.0;
  Texture texture;
  std::vector<Primitive> lesions;
  // Tissue support; the tissue mask is the whole volume when absent.
  std::optional<Ellipsoid> brain;
  std::uint64_t seed = 0;
};

struct Phantom {
  Volume3D chi;
  Mask tissue_mask;
  Mask lesion_mask;
};

inline constexpr double kMaxHealthyDeltaChi = 2.0;
inline constexpr double kMaxLesionDeltaChi = 1.5;

// Throws ConfigError on out-of-bounds primitives or out-of-range contrast.
void validate(const PhantomSpec& spec);

Phantom make_phantom(const PhantomSpec& spec);

// Gaussian white noise low-passed in Fourier space: Gaussian taper with
// spatial std L/2 and a hard cutoff at |f| = 1/L cycles/voxel. Zero mean,
// unit standard deviation.
Volume3D band_limited_texture(const Dims& dims, const VoxelSize& voxel_size,
                              double correlation_length, std::uint64_t seed);

// Radial cutoff of band_limited_texture in cycles per voxel.
double texture_cutoff(double correlation_length);

// Deterministic seed derivation (splitmix64 of base and stream index).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

/// Randomisation envelope for a healthy training corpus.
struct CorpusSpec {
  PhantomSpec base;  // dims, voxel size, background, texture, brain support
  int min_primitives = 4;
  int max_primitives = 8;
  double max_delta_chi = 0.15;
  double min_size = 3.0;   // voxels
  double max_size = 9.0;   // voxels
  double noise_sigma = 0.005;  // ppm
  Vec3 b0_direction{0.0, 0.0, 1.0};
  std::vector<int> split_ratio{4, 1, 1};  // train, val, test
  // Exact train/val/test counts; overrides split_ratio when set.
  std::optional<std::vector<int>> split_counts;
};

struct CorpusMember {
  std::string id;
  std::string split;  // train | val | test
  std::uint64_t seed = 0;
  bool lesion = false;
  double lesion_ratio = 0.0;  // lesion dchi / healthy max dchi
  Phantom phantom;
  Volume3D field;             // noisy local field
  NoiseModel noise;
};

// Builds the default healthy corpus envelope on the given grid: brain
// ellipsoid at the centre with semi-axes 0.42 n, mild texture.
CorpusSpec default_corpus_spec(const Dims& dims = {64, 64, 32}, const VoxelSize& vs = {});

// Split labels for n members (largest-remainder rounding of the ratio).
std::vector<std::string> assign_splits(int n, const CorpusSpec& spec);

// Randomised healthy phantom for one corpus member.
PhantomSpec sample_healthy_spec(const CorpusSpec& spec, std::uint64_t seed);

CorpusMember simulate_member(const std::string& id, const PhantomSpec& spec,
                             const NoiseModel& noise, const Vec3& b0);

std::vector<CorpusMember> make_corpus(int n, const CorpusSpec& spec, std::uint64_t seed);

struct LesionSpec {
  Vec3 center{32.0, 32.0, 16.0};
  double radius = 5.0;       // voxels
  double delta_chi = 1.0;    // ppm
  double sigma0 = 0.005;     // ppm
  double alpha = 4.0;
};

// Healthy phantom sampled from `base` plus one spherical lesion; noise is
// elevated inside the lesion. Requires lesion dchi >= 3x base.max_delta_chi.
CorpusMember make_lesion_phantom(const CorpusSpec& base, const LesionSpec& lesion,
                                 std::uint64_t seed);

// Writes every member's volumes under `dir` plus `dir/manifest.json`.
void write_corpus(const std::vector<CorpusMember>& members, const CorpusSpec& spec,
                  std::uint64_t seed, const std::filesystem::path& dir);

struct ManifestEntry {
  std::string id;
  std::string split;
  std::uint64_t seed = 0;
  std::uint64_t noise_seed = 0;
  bool lesion = false;
  double lesion_ratio = 0.0;
  std::string chi;
  std::string field;
  std::string tissue_mask;
  std::string lesion_mask;
  std::string noise_sigma;
};

struct CorpusManifest {
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> members;
};

CorpusManifest read_manifest(const std::filesystem::path& manifest_path);
std::vector<CorpusMember> load_corpus(const std::filesystem::path& manifest_path);

void to_json(nlohmann::json& j, const Primitive& p);
void from_json(const nlohmann::json& j, Primitive& p);
void to_json(nlohmann::json& j, const PhantomSpec& s);
void from_json(const nlohmann::json& j, PhantomSpec& s);
void to_json(nlohmann::json& j, const CorpusSpec& s);
void from_json(const nlohmann::json& j, CorpusSpec& s);
void to_json(nlohmann::json& j, const LesionSpec& s);
void from_json(const nlohmann::json& j, LesionSpec& s);

}  // namespace qsmlab
