#include "support.hpp"

#include <Eigen/Core>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "qsmlab/qvol.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace qsmlab::cli {
namespace {

LogLevel g_level = LogLevel::Info;

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(item);
  return out;
}

double to_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("cannot parse '" + s + "' in " + what);
  }
}

void hash_bytes(std::uint64_t& h, std::istream& in) {
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
}

std::string hex(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace

void set_log_level(LogLevel level) { g_level = level; }

void log_info(const std::string& msg) {
  if (g_level != LogLevel::Quiet) std::cerr << msg << '\n';
}

void log_debug(const std::string& msg) {
  if (g_level == LogLevel::Debug) std::cerr << "[debug] " << msg << '\n';
}

int configure_threads() {
  int n = 0;
  if (const char* env = std::getenv("QSMLAB_NUM_THREADS")) {
    n = std::atoi(env);
    if (n < 1) throw ConfigError("QSMLAB_NUM_THREADS must be a positive integer");
  }
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#endif
  if (n > 0) Eigen::setNbThreads(n);
  return Eigen::nbThreads();
}

std::string file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  hash_bytes(h, in);
  return hex(h);
}

std::string volume_hash(const fs::path& path) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const fs::path& p : {qvol_header_path(path), qvol_payload_path(path)}) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open " + p.string());
    hash_bytes(h, in);
  }
  return hex(h);
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::pair<double, double> parse_window(const std::string& s) {
  const auto parts = split(s, ':');
  if (parts.size() != 2) throw ConfigError("window must look like lo:hi, got '" + s + "'");
  const double lo = to_double(parts[0], "window"), hi = to_double(parts[1], "window");
  if (!(hi > lo)) throw ConfigError("window upper bound must exceed lower bound");
  return {lo, hi};
}

std::vector<double> Sweep::values() const {
  std::vector<double> v;
  if (n == 1) return {lo};
  const double a = std::log(lo), b = std::log(hi);
  for (int i = 0; i < n; ++i) v.push_back(std::exp(a + (b - a) * i / double(n - 1)));
  v.front() = lo;
  v.back() = hi;
  return v;
}

Sweep parse_sweep(const std::string& s) {
  const auto parts = split(s, ':');
  if (parts.size() != 3) throw ConfigError("sweep must look like lo:hi:n, got '" + s + "'");
  Sweep sw{to_double(parts[0], "sweep"), to_double(parts[1], "sweep"),
           static_cast<int>(to_double(parts[2], "sweep"))};
  if (!(sw.lo > 0.0) || sw.hi < sw.lo || sw.n < 1) {
    throw ConfigError("sweep needs 0 < lo <= hi and n >= 1 (log spacing)");
  }
  return sw;
}

Dims parse_dims(const std::string& s) {
  const auto parts = split(s, ',');
  if (parts.size() != 3) throw ConfigError("dims must look like nx,ny,nz");
  Dims d{};
  std::size_t* dst[3] = {&d.nx, &d.ny, &d.nz};
  for (int i = 0; i < 3; ++i) {
    const double v = to_double(parts[i], "dims");
    if (v < 1 || v != std::floor(v)) throw ConfigError("dims must be positive integers");
    *dst[i] = static_cast<std::size_t>(v);
  }
  return d;
}

Vec3 parse_vec3(const std::string& s) {
  const auto parts = split(s, ',');
  if (parts.size() != 3) throw ConfigError("vector must look like x,y,z");
  return {to_double(parts[0], "vector"), to_double(parts[1], "vector"), to_double(parts[2], "vector")};
}

RunManifest::RunManifest(std::string command, std::vector<std::string> argv, fs::path out_dir)
    : out_dir_(std::move(out_dir)) {
  doc_ = json{{"command", std::move(command)},
              {"argv", std::move(argv)},
              {"version", QSMLAB_VERSION},
              {"revision", QSMLAB_GIT_REVISION},
              {"configs", json::object()},
              {"inputs", json::object()},
              {"outputs", json::object()}};
}

void RunManifest::add_input(const std::string& name, const fs::path& path, bool volume) {
  doc_["inputs"][name] = {{"path", path.string()}, {"hash", volume ? volume_hash(path) : file_hash(path)}};
}

void RunManifest::add_output(const std::string& name, const fs::path& path, bool volume) {
  doc_["outputs"][name] = {{"path", fs::relative(path, out_dir_).string()},
                           {"hash", volume ? volume_hash(path) : file_hash(path)}};
}

void RunManifest::write() const { write_json(out_dir_ / "run_manifest.json", doc_); }

}  // namespace qsmlab::cli
