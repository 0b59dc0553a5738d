#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qsmlab/dipole.hpp"
#include "qsmlab/volume.hpp"

namespace qsmlab::cli {

namespace fs = std::filesystem;
using nlohmann::json;

enum class LogLevel { Quiet, Info, Debug };
void set_log_level(LogLevel level);
void log_info(const std::string& msg);
void log_debug(const std::string& msg);

// QSMLAB_NUM_THREADS caps Eigen/OpenMP threads; returns the count in use.
int configure_threads();

// 64-bit FNV-1a of a file's bytes. Cheap content fingerprint for manifests.
std::string file_hash(const fs::path& path);
// Hash of a .qvol pair (header then payload).
std::string volume_hash(const fs::path& path);

json read_json(const fs::path& path);
void write_json(const fs::path& path, const json& j);
void write_text(const fs::path& path, const std::string& text);

std::pair<double, double> parse_window(const std::string& s);

struct Sweep {
  double lo = 0.0;
  double hi = 0.0;
  int n = 1;
  std::vector<double> values() const;  // log-spaced, endpoints included
};
Sweep parse_sweep(const std::string& s);

Dims parse_dims(const std::string& s);
Vec3 parse_vec3(const std::string& s);

/// Per-run record: what ran, with which configs and seeds, on which inputs,
/// producing which outputs. Written to <out>/run_manifest.json.
class RunManifest {
 public:
  RunManifest(std::string command, std::vector<std::string> argv, fs::path out_dir);

  void set_seed(std::uint64_t seed) { doc_["seed"] = seed; }
  void add_config(const std::string& name, const json& config) { doc_["configs"][name] = config; }
  void add_input(const std::string& name, const fs::path& path, bool volume = false);
  void add_output(const std::string& name, const fs::path& path, bool volume = false);
  void set(const std::string& key, const json& value) { doc_[key] = value; }
  void write() const;

 private:
  fs::path out_dir_;
  json doc_;
};

}  // namespace qsmlab::cli
