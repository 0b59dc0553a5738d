#include "qsmlab/checkpoint.hpp"

#include <fstream>

namespace qsmlab::ad {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path stem(const fs::path& p) {
  if (p.extension() == ".json" || p.extension() == ".bin") {
    fs::path s = p;
    return s.replace_extension();
  }
  return p;
}

}  // namespace

fs::path checkpoint_manifest_path(const fs::path& path) {
  fs::path p = stem(path);
  p += ".json";
  return p;
}

fs::path checkpoint_payload_path(const fs::path& path) {
  fs::path p = stem(path);
  p += ".bin";
  return p;
}

void save_checkpoint(const fs::path& path, const ParameterRegistry& params, const AdamState* adam,
                     const json& metadata) {
  if (stem(path).has_parent_path()) fs::create_directories(stem(path).parent_path());
  std::ofstream bin(checkpoint_payload_path(path), std::ios::binary);
  if (!bin) throw IoError("cannot write " + checkpoint_payload_path(path).string());
  std::size_t offset = 0;
  auto write = [&](std::span<const double> values) {
    bin.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(double)));
    const std::size_t at = offset;
    offset += values.size();
    return at;
  };
  json manifest;
  manifest["format"] = "qsmlab-params/1";
  manifest["dtype"] = "f64";
  manifest["tensors"] = json::array();
  auto record = [&](const NamedTensor& t, const char* kind) {
    const std::size_t at = write(t.tensor.values());
    manifest["tensors"].push_back(
        {{"name", t.name}, {"kind", kind}, {"shape", t.tensor.shape()}, {"offset", at},
         {"count", t.tensor.numel()}});
  };
  for (const auto& p : params.parameters()) record(p, "param");
  for (const auto& b : params.buffers()) record(b, "buffer");
  if (adam != nullptr) {
    json a{{"step", adam->step}, {"lr", adam->lr}, {"beta1", adam->beta1},
           {"beta2", adam->beta2}, {"eps", adam->eps}, {"moments", json::array()}};
    for (std::size_t k = 0; k < adam->m.size(); ++k) {
      const std::size_t mo = write(adam->m[k]);
      const std::size_t vo = write(adam->v[k]);
      a["moments"].push_back({{"m_offset", mo}, {"v_offset", vo}, {"count", adam->m[k].size()}});
    }
    manifest["adam"] = a;
  }
  manifest["metadata"] = metadata;
  manifest["payload_values"] = offset;
  if (!bin) throw IoError("write failed for " + checkpoint_payload_path(path).string());
  bin.close();
  std::ofstream out(checkpoint_manifest_path(path));
  if (!out) throw IoError("cannot write " + checkpoint_manifest_path(path).string());
  out << manifest.dump(2) << "\n";
}

json read_checkpoint_manifest(const fs::path& path) {
  std::ifstream in(checkpoint_manifest_path(path));
  if (!in) throw IoError("cannot open checkpoint " + checkpoint_manifest_path(path).string());
  try {
    json j;
    in >> j;
    if (j.value("format", "") != "qsmlab-params/1") throw IoError("unknown checkpoint format");
    return j;
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed checkpoint manifest: ") + e.what());
  }
}

LoadedCheckpoint load_checkpoint(const fs::path& path, ParameterRegistry& params) {
  const json manifest = read_checkpoint_manifest(path);
  const std::size_t total = manifest.at("payload_values").get<std::size_t>();
  std::error_code ec;
  const auto bytes = fs::file_size(checkpoint_payload_path(path), ec);
  if (ec || bytes != total * sizeof(double)) {
    throw IoError("checkpoint payload length mismatch for " + checkpoint_payload_path(path).string());
  }
  std::vector<double> payload(total);
  std::ifstream bin(checkpoint_payload_path(path), std::ios::binary);
  bin.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(bytes));
  if (!bin) throw IoError("short read on checkpoint payload");

  auto fill = [&](std::vector<NamedTensor>& list, const char* kind) {
    std::size_t k = 0;
    for (const auto& t : manifest.at("tensors")) {
      if (t.at("kind").get<std::string>() != kind) continue;
      if (k >= list.size()) throw DimensionError("checkpoint has more tensors than the model");
      NamedTensor& dst = list[k++];
      const auto shape = t.at("shape").get<Shape>();
      if (t.at("name").get<std::string>() != dst.name || shape != dst.tensor.shape()) {
        throw DimensionError("checkpoint tensor '" + t.at("name").get<std::string>() +
                             "' does not match model tensor '" + dst.name + "'");
      }
      const auto off = t.at("offset").get<std::size_t>();
      const auto cnt = t.at("count").get<std::size_t>();
      if (off + cnt > total) throw IoError("checkpoint tensor outside payload");
      auto v = dst.tensor.mutable_values();
      std::copy_n(payload.begin() + static_cast<std::ptrdiff_t>(off), cnt, v.begin());
    }
    if (k != list.size()) throw DimensionError("checkpoint has fewer tensors than the model");
  };
  fill(params.parameters(), "param");
  fill(params.buffers(), "buffer");

  LoadedCheckpoint out;
  out.metadata = manifest.value("metadata", json::object());
  if (manifest.contains("adam")) {
    const auto& a = manifest["adam"];
    AdamState s;
    s.step = a.at("step").get<std::uint64_t>();
    s.lr = a.at("lr").get<double>();
    s.beta1 = a.at("beta1").get<double>();
    s.beta2 = a.at("beta2").get<double>();
    s.eps = a.at("eps").get<double>();
    for (const auto& mo : a.at("moments")) {
      const auto cnt = mo.at("count").get<std::size_t>();
      const auto m_off = mo.at("m_offset").get<std::size_t>();
      const auto v_off = mo.at("v_offset").get<std::size_t>();
      if (m_off + cnt > total || v_off + cnt > total) throw IoError("Adam moments outside payload");
      s.m.emplace_back(payload.begin() + std::ptrdiff_t(m_off), payload.begin() + std::ptrdiff_t(m_off + cnt));
      s.v.emplace_back(payload.begin() + std::ptrdiff_t(v_off), payload.begin() + std::ptrdiff_t(v_off + cnt));
    }
    out.adam = std::move(s);
  }
  return out;
}

}  // namespace qsmlab::ad
