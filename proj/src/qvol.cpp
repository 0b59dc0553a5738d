#include "qsmlab/qvol.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <vector>

namespace qsmlab {
namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "qvol payloads are little-endian");

std::string to_string(DType t) { return t == DType::F32 ? "f32" : "f64"; }

DType dtype_from_string(const std::string& s) {
  if (s == "f32") return DType::F32;
  if (s == "f64") return DType::F64;
  throw IoError("unknown qvol dtype tag '" + s + "'");
}

namespace {

fs::path stem_path(const fs::path& path) {
  const auto ext = path.extension();
  if (ext == ".json" || ext == ".bin" || ext == ".qvol") {
    fs::path p = path;
    return p.replace_extension();
  }
  return path;
}

fs::path with_suffix(const fs::path& path, const char* suffix) {
  fs::path p = stem_path(path);
  p += suffix;
  return p;
}

void write_header(const VolumeHeader& h, const fs::path& path) {
  json j;
  j["dims"] = {h.dims.nx, h.dims.ny, h.dims.nz};
  j["voxel_size_mm"] = {h.voxel_size.dx, h.voxel_size.dy, h.voxel_size.dz};
  j["dtype"] = to_string(h.dtype);
  j["order"] = h.order;
  j["role"] = h.role;
  if (h.complex) j["complex"] = true;
  std::ofstream out(qvol_header_path(path));
  if (!out) throw IoError("cannot write " + qvol_header_path(path).string());
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed for " + qvol_header_path(path).string());
}

void write_payload(std::span<const double> values, DType dtype, const fs::path& path) {
  std::ofstream out(qvol_payload_path(path), std::ios::binary);
  if (!out) throw IoError("cannot write " + qvol_payload_path(path).string());
  if (dtype == DType::F64) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(double)));
  } else {
    std::vector<float> buf(values.begin(), values.end());
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) throw IoError("write failed for " + qvol_payload_path(path).string());
}

std::vector<double> read_payload(const VolumeHeader& h, const fs::path& path) {
  const std::size_t count = h.dims.size() * (h.complex ? 2 : 1);
  const std::size_t width = h.dtype == DType::F64 ? sizeof(double) : sizeof(float);
  const fs::path bin = qvol_payload_path(path);
  std::error_code ec;
  const auto bytes = fs::file_size(bin, ec);
  if (ec) throw IoError("cannot stat " + bin.string() + ": " + ec.message());
  if (bytes != count * width) {
    throw IoError("qvol length mismatch: " + bin.string() + " has " + std::to_string(bytes) +
                  " bytes, header requires " + std::to_string(count * width));
  }
  std::ifstream in(bin, std::ios::binary);
  if (!in) throw IoError("cannot read " + bin.string());
  std::vector<double> values(count);
  if (h.dtype == DType::F64) {
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(bytes));
  } else {
    std::vector<float> buf(count);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
    std::copy(buf.begin(), buf.end(), values.begin());
  }
  if (!in) throw IoError("short read on " + bin.string());
  return values;
}

}  // namespace

fs::path qvol_header_path(const fs::path& path) { return with_suffix(path, ".json"); }
fs::path qvol_payload_path(const fs::path& path) { return with_suffix(path, ".bin"); }

VolumeHeader load_volume_header(const fs::path& path) {
  std::ifstream in(qvol_header_path(path));
  if (!in) throw IoError("cannot open " + qvol_header_path(path).string());
  json j;
  try {
    in >> j;
    VolumeHeader h;
    const auto dims = j.at("dims").get<std::vector<std::size_t>>();
    const auto vs = j.at("voxel_size_mm").get<std::vector<double>>();
    if (dims.size() != 3 || vs.size() != 3) throw IoError("qvol header needs 3 dims");
    h.dims = {dims[0], dims[1], dims[2]};
    h.voxel_size = {vs[0], vs[1], vs[2]};
    h.dtype = dtype_from_string(j.at("dtype").get<std::string>());
    h.order = j.at("order").get<std::string>();
    h.role = j.value("role", std::string{});
    h.complex = j.value("complex", false);
    if (h.order != "row-major-z-fastest") throw IoError("unsupported axis order '" + h.order + "'");
    validate_dims(h.dims);
    return h;
  } catch (const json::exception& e) {
    throw IoError("malformed qvol header " + qvol_header_path(path).string() + ": " + e.what());
  } catch (const DimensionError& e) {
    throw IoError(std::string("bad qvol header: ") + e.what());
  }
}

void save_volume(const Volume3D& v, const fs::path& path, const std::string& role, DType dtype) {
  if (v.empty()) throw IoError("refusing to save an empty volume");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  VolumeHeader h{v.dims(), v.voxel_size(), dtype, "row-major-z-fastest", role, false};
  write_payload(v.data(), dtype, path);
  write_header(h, path);
}

void save_complex_volume(const ComplexVolume3D& v, const fs::path& path, const std::string& role,
                         DType dtype) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  VolumeHeader h{v.dims(), v.voxel_size(), dtype, "row-major-z-fastest", role, true};
  std::span<const double> flat(reinterpret_cast<const double*>(v.data().data()), v.size() * 2);
  write_payload(flat, dtype, path);
  write_header(h, path);
}

Volume3D load_volume(const fs::path& path, VolumeHeader& header) {
  header = load_volume_header(path);
  if (header.complex) throw IoError(path.string() + " holds a complex volume");
  return Volume3D(header.dims, header.voxel_size, read_payload(header, path));
}

Volume3D load_volume(const fs::path& path) {
  VolumeHeader h;
  return load_volume(path, h);
}

ComplexVolume3D load_complex_volume(const fs::path& path) {
  const VolumeHeader h = load_volume_header(path);
  if (!h.complex) throw IoError(path.string() + " holds a real volume");
  const auto flat = read_payload(h, path);
  ComplexVolume3D out(h.dims, h.voxel_size);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = {flat[2 * i], flat[2 * i + 1]};
  return out;
}

void save_mask(const Mask& m, const fs::path& path) {
  save_volume(m.values(), path, to_string(m.role()) + "-mask", DType::F64);
}

Mask load_mask(const fs::path& path) {
  VolumeHeader h;
  Volume3D v = load_volume(path, h);
  std::string role = h.role;
  if (role.ends_with("-mask")) role.resize(role.size() - 5);
  return Mask(std::move(v), role.empty() ? MaskRole::Tissue : mask_role_from_string(role));
}

}  // namespace qsmlab
