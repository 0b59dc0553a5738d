#include "qsmlab/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <random>

#include "qsmlab/qvol.hpp"

namespace qsmlab {
namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Shape s) {
  switch (s) {
    case Shape::Sphere: return "sphere";
    case Shape::Cylinder: return "cylinder";
    case Shape::Cuboid: return "cuboid";
  }
  return "sphere";
}

Shape shape_from_string(const std::string& s) {
  if (s == "sphere") return Shape::Sphere;
  if (s == "cylinder") return Shape::Cylinder;
  if (s == "cuboid") return Shape::Cuboid;
  throw ConfigError("unknown primitive shape '" + s + "'");
}

bool Primitive::contains(double x, double y, double z) const {
  const double dx = x - center[0];
  const double dy = y - center[1];
  const double dz = z - center[2];
  switch (shape) {
    case Shape::Sphere: return dx * dx + dy * dy + dz * dz <= size[0] * size[0];
    case Shape::Cylinder: return dx * dx + dy * dy <= size[0] * size[0] && std::abs(dz) <= size[1];
    case Shape::Cuboid:
      return std::abs(dx) <= size[0] && std::abs(dy) <= size[1] && std::abs(dz) <= size[2];
  }
  return false;
}

bool Ellipsoid::contains(double x, double y, double z) const {
  const double u = (x - center[0]) / semi_axes[0];
  const double v = (y - center[1]) / semi_axes[1];
  const double w = (z - center[2]) / semi_axes[2];
  return u * u + v * v + w * w <= 1.0;
}

namespace {

Vec3 half_extent(const Primitive& p) {
  switch (p.shape) {
    case Shape::Sphere: return {p.size[0], p.size[0], p.size[0]};
    case Shape::Cylinder: return {p.size[0], p.size[0], p.size[1]};
    case Shape::Cuboid: return p.size;
  }
  return p.size;
}

void check_inside(const Primitive& p, const Dims& dims, const char* what) {
  const Vec3 h = half_extent(p);
  const std::array<std::size_t, 3> n = dims.as_array();
  for (int a = 0; a < 3; ++a) {
    if (!(h[a] > 0.0)) throw ConfigError(std::string(what) + " has nonpositive size");
    if (p.center[a] - h[a] < 0.0 || p.center[a] + h[a] > static_cast<double>(n[a] - 1)) {
      throw ConfigError(std::string(what) + " extends outside the volume");
    }
  }
}

void rasterize(const Primitive& p, Volume3D& chi, Volume3D* mask) {
  const Dims& d = chi.dims();
  const Vec3 h = half_extent(p);
  const auto lo = [&](int a) {
    return static_cast<std::size_t>(std::max(0.0, std::floor(p.center[a] - h[a])));
  };
  const auto hi = [&](int a, std::size_t n) {
    return std::min(n - 1, static_cast<std::size_t>(std::ceil(p.center[a] + h[a])));
  };
  for (std::size_t x = lo(0); x <= hi(0, d.nx); ++x) {
    for (std::size_t y = lo(1); y <= hi(1, d.ny); ++y) {
      for (std::size_t z = lo(2); z <= hi(2, d.nz); ++z) {
        if (!p.contains(double(x), double(y), double(z))) continue;
        chi.at(x, y, z) += p.delta_chi;
        if (mask != nullptr) mask->at(x, y, z) = 1.0;
      }
    }
  }
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace

void validate(const PhantomSpec& spec) {
  validate_dims(spec.dims);
  validate_voxel_size(spec.voxel_size);
  for (const auto& p : spec.primitives) {
    check_inside(p, spec.dims, "primitive");
    if (std::abs(p.delta_chi) > kMaxHealthyDeltaChi) {
      throw ConfigError("primitive |delta_chi| exceeds 2 ppm");
    }
  }
  for (const auto& p : spec.lesions) {
    check_inside(p, spec.dims, "lesion");
    if (std::abs(p.delta_chi) > kMaxLesionDeltaChi) {
      throw ConfigError("lesion |delta_chi| exceeds 1.5 ppm");
    }
  }
  if (spec.texture.amplitude < 0.0) throw ConfigError("texture amplitude must be >= 0");
  if (spec.texture.amplitude > 0.0 && !(spec.texture.correlation_length > 0.0)) {
    throw ConfigError("texture correlation length must be positive");
  }
  if (spec.brain) {
    for (double s : spec.brain->semi_axes) {
      if (!(s > 0.0)) throw ConfigError("brain semi-axes must be positive");
    }
  }
}

double texture_cutoff(double correlation_length) { return 1.0 / correlation_length; }

Volume3D band_limited_texture(const Dims& dims, const VoxelSize& voxel_size,
                              double correlation_length, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Volume3D white(dims, voxel_size);
  for (double& v : white.data()) v = normal(rng);
  ComplexVolume3D spec = fft3(white);
  const double sigma = correlation_length / 2.0;
  const double cutoff = texture_cutoff(correlation_length);
  const double two_pi2_s2 = 2.0 * M_PI * M_PI * sigma * sigma;
  for (std::size_t x = 0; x < dims.nx; ++x) {
    const double fx = bin_frequency(x, dims.nx, 1.0);
    for (std::size_t y = 0; y < dims.ny; ++y) {
      const double fy = bin_frequency(y, dims.ny, 1.0);
      for (std::size_t z = 0; z < dims.nz; ++z) {
        const double fz = bin_frequency(z, dims.nz, 1.0);
        const double f2 = fx * fx + fy * fy + fz * fz;
        const double h = (f2 == 0.0 || f2 > cutoff * cutoff) ? 0.0 : std::exp(-two_pi2_s2 * f2);
        spec[dims.index(x, y, z)] *= h;
      }
    }
  }
  Volume3D tex = ifft3(spec).real();
  const double mean = sum(tex) / static_cast<double>(tex.size());
  double var = 0.0;
  for (double& v : tex.data()) {
    v -= mean;
    var += v * v;
  }
  const double sd = std::sqrt(var / static_cast<double>(tex.size()));
  if (sd > 0.0) tex *= 1.0 / sd;
  return tex;
}

Phantom make_phantom(const PhantomSpec& spec) {
  validate(spec);
  Volume3D chi(spec.dims, spec.voxel_size, spec.background_chi);
  Volume3D tissue(spec.dims, spec.voxel_size, spec.brain ? 0.0 : 1.0);
  Volume3D lesion(spec.dims, spec.voxel_size, 0.0);
  if (spec.brain) {
    for (std::size_t x = 0; x < spec.dims.nx; ++x)
      for (std::size_t y = 0; y < spec.dims.ny; ++y)
        for (std::size_t z = 0; z < spec.dims.nz; ++z)
          if (spec.brain->contains(double(x), double(y), double(z))) tissue.at(x, y, z) = 1.0;
  }
  for (const auto& p : spec.primitives) rasterize(p, chi, nullptr);
  if (spec.texture.amplitude > 0.0) {
    const Volume3D tex = band_limited_texture(spec.dims, spec.voxel_size,
                                              spec.texture.correlation_length, spec.seed);
    for (std::size_t i = 0; i < chi.size(); ++i) {
      chi[i] += spec.texture.amplitude * tex[i] * tissue[i];
    }
  }
  for (const auto& p : spec.lesions) rasterize(p, chi, &lesion);
  return {std::move(chi), Mask(std::move(tissue), MaskRole::Tissue),
          Mask(std::move(lesion), MaskRole::Lesion)};
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

CorpusSpec default_corpus_spec(const Dims& dims, const VoxelSize& vs) {
  CorpusSpec spec;
  spec.base.dims = dims;
  spec.base.voxel_size = vs;
  spec.base.texture = {0.01, 4.0};
  const Vec3 c{(dims.nx - 1) / 2.0, (dims.ny - 1) / 2.0, (dims.nz - 1) / 2.0};
  spec.base.brain = Ellipsoid{c, {0.42 * dims.nx, 0.42 * dims.ny, 0.42 * dims.nz}};
  const double smallest = static_cast<double>(std::min({dims.nx, dims.ny, dims.nz}));
  spec.max_size = std::min(spec.max_size, 0.25 * smallest);
  spec.min_size = std::min(spec.min_size, 0.5 * spec.max_size);
  return spec;
}

std::vector<std::string> assign_splits(int n, const CorpusSpec& spec) {
  if (n < 1) throw ConfigError("corpus size must be >= 1");
  static const std::array<const char*, 3> kNames{"train", "val", "test"};
  std::array<int, 3> counts{0, 0, 0};
  if (spec.split_counts) {
    const auto& c = *spec.split_counts;
    if (c.size() != 3 || std::accumulate(c.begin(), c.end(), 0) != n ||
        std::any_of(c.begin(), c.end(), [](int v) { return v < 0; })) {
      throw ConfigError("split_counts must be three non-negative counts summing to n");
    }
    counts = {c[0], c[1], c[2]};
  } else {
    const auto& r = spec.split_ratio;
    if (r.size() != 3 || std::any_of(r.begin(), r.end(), [](int v) { return v < 0; })) {
      throw ConfigError("split_ratio must hold three non-negative weights");
    }
    const int total = r[0] + r[1] + r[2];
    if (total <= 0) throw ConfigError("split_ratio must not be all zero");
    std::array<double, 3> remainder{};
    int assigned = 0;
    for (int k = 0; k < 3; ++k) {
      const double exact = static_cast<double>(n) * r[k] / total;
      counts[k] = static_cast<int>(std::floor(exact));
      remainder[k] = exact - counts[k];
      assigned += counts[k];
    }
    while (assigned < n) {
      // Ties resolve towards train, then val.
      int best = 0;
      for (int k = 1; k < 3; ++k)
        if (remainder[k] > remainder[best] + 1e-12) best = k;
      ++counts[best];
      remainder[best] = -1.0;
      ++assigned;
    }
  }
  std::vector<std::string> out;
  for (int k = 0; k < 3; ++k) out.insert(out.end(), counts[k], kNames[k]);
  return out;
}

PhantomSpec sample_healthy_spec(const CorpusSpec& spec, std::uint64_t seed) {
  PhantomSpec p = spec.base;
  p.seed = seed;
  p.primitives.clear();
  p.lesions.clear();
  std::mt19937_64 rng(seed);
  const int count =
      std::uniform_int_distribution<int>(spec.min_primitives, spec.max_primitives)(rng);
  const auto n = p.dims.as_array();
  const Vec3 c0 = p.brain ? p.brain->center
                          : Vec3{(n[0] - 1) / 2.0, (n[1] - 1) / 2.0, (n[2] - 1) / 2.0};
  const Vec3 semi = p.brain ? p.brain->semi_axes : Vec3{n[0] / 2.0, n[1] / 2.0, n[2] / 2.0};
  for (int i = 0; i < count; ++i) {
    Primitive prim;
    prim.shape = static_cast<Shape>(std::uniform_int_distribution<int>(0, 2)(rng));
    for (double& s : prim.size) s = uniform(rng, spec.min_size, spec.max_size);
    prim.delta_chi = uniform(rng, -spec.max_delta_chi, spec.max_delta_chi);
    const Vec3 h = half_extent(prim);
    // Centre inside the (shrunken) support, then clamp to the volume.
    Vec3 dir{};
    double r2 = 2.0;
    while (r2 > 1.0) {
      for (double& d : dir) d = uniform(rng, -1.0, 1.0);
      r2 = dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2];
    }
    for (int a = 0; a < 3; ++a) {
      const double reach = std::max(0.0, semi[a] - h[a]);
      const double lo = h[a];
      const double hi = static_cast<double>(n[a] - 1) - h[a];
      prim.center[a] = std::clamp(c0[a] + dir[a] * reach, lo, std::max(lo, hi));
    }
    p.primitives.push_back(prim);
  }
  return p;
}

CorpusMember simulate_member(const std::string& id, const PhantomSpec& spec,
                             const NoiseModel& noise, const Vec3& b0) {
  CorpusMember m;
  m.id = id;
  m.seed = spec.seed;
  m.phantom = make_phantom(spec);
  const DipoleKernel kernel = build_dipole_kernel(spec.dims, spec.voxel_size, b0);
  m.field = add_noise(forward_field(m.phantom.chi, kernel), noise);
  m.noise = noise;
  return m;
}

std::vector<CorpusMember> make_corpus(int n, const CorpusSpec& spec, std::uint64_t seed) {
  const auto splits = assign_splits(n, spec);
  std::vector<CorpusMember> members;
  members.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const std::uint64_t member_seed = derive_seed(seed, 2 * static_cast<std::uint64_t>(i));
    const std::uint64_t noise_seed = derive_seed(seed, 2 * static_cast<std::uint64_t>(i) + 1);
    const PhantomSpec ps = sample_healthy_spec(spec, member_seed);
    char id[16];
    std::snprintf(id, sizeof(id), "m%03d", i);
    CorpusMember m = simulate_member(
        id, ps, uniform_noise(ps.dims, ps.voxel_size, spec.noise_sigma, noise_seed),
        spec.b0_direction);
    m.split = splits[static_cast<std::size_t>(i)];
    members.push_back(std::move(m));
  }
  return members;
}

CorpusMember make_lesion_phantom(const CorpusSpec& base, const LesionSpec& lesion,
                                 std::uint64_t seed) {
  if (!(base.max_delta_chi > 0.0)) throw ConfigError("healthy max delta_chi must be positive");
  const double ratio = std::abs(lesion.delta_chi) / base.max_delta_chi;
  if (ratio < 3.0) {
    throw ConfigError("lesion delta_chi must be at least 3x the healthy corpus maximum");
  }
  PhantomSpec ps = sample_healthy_spec(base, derive_seed(seed, 0));
  Primitive p{Shape::Sphere, lesion.center, {lesion.radius, lesion.radius, lesion.radius},
              lesion.delta_chi};
  ps.lesions.push_back(p);
  const Phantom ph = make_phantom(ps);  // validates the lesion bounds
  NoiseModel noise = lesion_coupled_noise(ph.chi, ph.lesion_mask, lesion.sigma0, lesion.alpha,
                                          derive_seed(seed, 1));
  CorpusMember m = simulate_member("lesion", ps, noise, base.b0_direction);
  m.lesion = true;
  m.lesion_ratio = ratio;
  m.split = "test";
  return m;
}

// ---------------------------------------------------------------------------
// JSON

void to_json(json& j, const Primitive& p) {
  j = json{{"shape", to_string(p.shape)},
           {"center", p.center},
           {"size", p.size},
           {"delta_chi", p.delta_chi}};
}

void from_json(const json& j, Primitive& p) {
  p.shape = shape_from_string(j.at("shape").get<std::string>());
  p.center = j.at("center").get<Vec3>();
  const auto size = j.at("size").get<std::vector<double>>();
  if (size.empty() || size.size() > 3) throw ConfigError("primitive size needs 1-3 entries");
  p.size = {size[0], size.size() > 1 ? size[1] : size[0], size.size() > 2 ? size[2] : size[0]};
  p.delta_chi = j.at("delta_chi").get<double>();
}

void to_json(json& j, const PhantomSpec& s) {
  j = json{{"dims", s.dims.as_array()},
           {"voxel_size_mm", {s.voxel_size.dx, s.voxel_size.dy, s.voxel_size.dz}},
           {"primitives", s.primitives},
           {"background_chi", s.background_chi},
           {"texture",
            {{"amplitude", s.texture.amplitude},
             {"correlation_length", s.texture.correlation_length}}},
           {"lesions", s.lesions},
           {"seed", s.seed}};
  if (s.brain) j["brain"] = {{"center", s.brain->center}, {"semi_axes", s.brain->semi_axes}};
}

void from_json(const json& j, PhantomSpec& s) {
  const auto d = j.at("dims").get<std::vector<std::size_t>>();
  if (d.size() != 3) throw ConfigError("dims must have three entries");
  s.dims = {d[0], d[1], d[2]};
  if (j.contains("voxel_size_mm")) {
    const auto v = j.at("voxel_size_mm").get<std::vector<double>>();
    if (v.size() != 3) throw ConfigError("voxel_size_mm must have three entries");
    s.voxel_size = {v[0], v[1], v[2]};
  }
  s.primitives = j.value("primitives", std::vector<Primitive>{});
  s.background_chi = j.value("background_chi", 0.0);
  if (j.contains("texture")) {
    s.texture.amplitude = j["texture"].value("amplitude", 0.0);
    s.texture.correlation_length = j["texture"].value("correlation_length", 4.0);
  }
  s.lesions = j.value("lesions", std::vector<Primitive>{});
  s.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("brain")) {
    s.brain = Ellipsoid{j["brain"].at("center").get<Vec3>(), j["brain"].at("semi_axes").get<Vec3>()};
  } else {
    s.brain.reset();
  }
}

void to_json(json& j, const CorpusSpec& s) {
  j = json{{"base", s.base},
           {"min_primitives", s.min_primitives},
           {"max_primitives", s.max_primitives},
           {"max_delta_chi", s.max_delta_chi},
           {"min_size", s.min_size},
           {"max_size", s.max_size},
           {"noise_sigma", s.noise_sigma},
           {"b0_direction", s.b0_direction},
           {"split_ratio", s.split_ratio}};
  if (s.split_counts) j["split_counts"] = *s.split_counts;
}

void from_json(const json& j, CorpusSpec& s) {
  PhantomSpec base = j.at("base").get<PhantomSpec>();
  s = default_corpus_spec(base.dims, base.voxel_size);
  if (j.at("base").contains("brain")) s.base.brain = base.brain;
  s.base.primitives = base.primitives;
  s.base.background_chi = base.background_chi;
  if (j.at("base").contains("texture")) s.base.texture = base.texture;
  s.min_primitives = j.value("min_primitives", s.min_primitives);
  s.max_primitives = j.value("max_primitives", s.max_primitives);
  s.max_delta_chi = j.value("max_delta_chi", s.max_delta_chi);
  s.min_size = j.value("min_size", s.min_size);
  s.max_size = j.value("max_size", s.max_size);
  s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
  s.b0_direction = j.value("b0_direction", s.b0_direction);
  s.split_ratio = j.value("split_ratio", s.split_ratio);
  if (j.contains("split_counts")) s.split_counts = j["split_counts"].get<std::vector<int>>();
  if (s.min_primitives < 0 || s.max_primitives < s.min_primitives) {
    throw ConfigError("invalid primitive count range");
  }
  if (!(s.min_size > 0.0) || s.max_size < s.min_size) throw ConfigError("invalid size range");
  if (!(s.noise_sigma > 0.0)) throw ConfigError("noise_sigma must be positive");
}

void to_json(json& j, const LesionSpec& s) {
  j = json{{"center", s.center},   {"radius", s.radius}, {"delta_chi", s.delta_chi},
           {"sigma0", s.sigma0},   {"alpha", s.alpha}};
}

void from_json(const json& j, LesionSpec& s) {
  s.center = j.value("center", s.center);
  s.radius = j.value("radius", s.radius);
  s.delta_chi = j.value("delta_chi", s.delta_chi);
  s.sigma0 = j.value("sigma0", s.sigma0);
  s.alpha = j.value("alpha", s.alpha);
}

// ---------------------------------------------------------------------------
// Corpus on disk

void write_corpus(const std::vector<CorpusMember>& members, const CorpusSpec& spec,
                  std::uint64_t seed, const fs::path& dir) {
  fs::create_directories(dir);
  json manifest;
  manifest["format"] = "qsmlab-corpus/1";
  manifest["seed"] = seed;
  manifest["spec"] = spec;
  manifest["members"] = json::array();
  for (const auto& m : members) {
    const std::string base = m.id + "/";
    save_volume(m.phantom.chi, dir / (base + "chi"), "susceptibility");
    save_volume(m.field, dir / (base + "field"), "local-field");
    save_mask(m.phantom.tissue_mask, dir / (base + "tissue_mask"));
    save_mask(m.phantom.lesion_mask, dir / (base + "lesion_mask"));
    save_volume(m.noise.sigma, dir / (base + "noise_sigma"), "noise-sigma");
    manifest["members"].push_back({{"id", m.id},
                                   {"split", m.split},
                                   {"seed", m.seed},
                                   {"noise_seed", m.noise.seed},
                                   {"lesion", m.lesion},
                                   {"lesion_ratio", m.lesion_ratio},
                                   {"files",
                                    {{"chi", base + "chi"},
                                     {"field", base + "field"},
                                     {"tissue_mask", base + "tissue_mask"},
                                     {"lesion_mask", base + "lesion_mask"},
                                     {"noise_sigma", base + "noise_sigma"}}}});
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << "\n";
}

CorpusManifest read_manifest(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest " + manifest_path.string());
  try {
    json j;
    in >> j;
    CorpusManifest m;
    m.seed = j.value("seed", std::uint64_t{0});
    for (const auto& e : j.at("members")) {
      ManifestEntry me;
      me.id = e.at("id").get<std::string>();
      me.split = e.at("split").get<std::string>();
      me.seed = e.at("seed").get<std::uint64_t>();
      me.noise_seed = e.at("noise_seed").get<std::uint64_t>();
      me.lesion = e.value("lesion", false);
      me.lesion_ratio = e.value("lesion_ratio", 0.0);
      const auto& f = e.at("files");
      me.chi = f.at("chi").get<std::string>();
      me.field = f.at("field").get<std::string>();
      me.tissue_mask = f.at("tissue_mask").get<std::string>();
      me.lesion_mask = f.at("lesion_mask").get<std::string>();
      me.noise_sigma = f.at("noise_sigma").get<std::string>();
      m.members.push_back(std::move(me));
    }
    return m;
  } catch (const json::exception& e) {
    throw IoError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }
}

std::vector<CorpusMember> load_corpus(const fs::path& manifest_path) {
  const CorpusManifest manifest = read_manifest(manifest_path);
  const fs::path dir = manifest_path.parent_path();
  std::vector<CorpusMember> out;
  for (const auto& e : manifest.members) {
    CorpusMember m;
    m.id = e.id;
    m.split = e.split;
    m.seed = e.seed;
    m.lesion = e.lesion;
    m.lesion_ratio = e.lesion_ratio;
    m.phantom.chi = load_volume(dir / e.chi);
    m.phantom.tissue_mask = load_mask(dir / e.tissue_mask);
    m.phantom.lesion_mask = load_mask(dir / e.lesion_mask);
    m.field = load_volume(dir / e.field);
    m.noise = NoiseModel{load_volume(dir / e.noise_sigma), e.noise_seed};
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace qsmlab
