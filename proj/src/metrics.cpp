#include "qsmlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>

namespace qsmlab::metrics {
using nlohmann::json;

namespace {

std::vector<std::size_t> masked_indices(const Volume3D& v, const Mask* mask, const char* what) {
  std::vector<std::size_t> idx;
  if (!mask) {
    idx.resize(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
  }
  require_same_grid(v, mask->values(), what);
  for (std::size_t i = 0; i < v.size(); ++i)
    if ((*mask)[i] > 0.0) idx.push_back(i);
  if (idx.empty()) throw ConfigError(std::string(what) + ": empty mask");
  return idx;
}

// Separable filtering along one axis with a symmetric kernel, truncated at
// the boundary and renormalised by the weight that falls inside.
Volume3D filter_axis(const Volume3D& v, const std::vector<double>& w, int axis) {
  const Dims& d = v.dims();
  const auto n = d.as_array();
  const long half = static_cast<long>(w.size() / 2);
  const std::size_t len = n[axis];
  const std::size_t stride = axis == 0 ? d.ny * d.nz : (axis == 1 ? d.nz : 1);
  Volume3D out(d, v.voxel_size());
  for (std::size_t x = 0; x < (axis == 0 ? 1 : d.nx); ++x)
    for (std::size_t y = 0; y < (axis == 1 ? 1 : d.ny); ++y)
      for (std::size_t z = 0; z < (axis == 2 ? 1 : d.nz); ++z) {
        const std::size_t base = d.index(x, y, z);
        for (std::size_t i = 0; i < len; ++i) {
          double acc = 0.0;
          double wsum = 0.0;
          for (long t = -half; t <= half; ++t) {
            const long j = static_cast<long>(i) + t;
            if (j < 0 || j >= static_cast<long>(len)) continue;
            const double wt = w[static_cast<std::size_t>(t + half)];
            acc += wt * v[base + static_cast<std::size_t>(j) * stride];
            wsum += wt;
          }
          out[base + i * stride] = acc / wsum;
        }
      }
  return out;
}

Volume3D gaussian_smooth(const Volume3D& v, double sigma, int support) {
  std::vector<double> w(static_cast<std::size_t>(support));
  const int half = support / 2;
  for (int t = -half; t <= half; ++t) w[static_cast<std::size_t>(t + half)] = std::exp(-0.5 * t * t / (sigma * sigma));
  return filter_axis(filter_axis(filter_axis(v, w, 0), w, 1), w, 2);
}

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = r;
    i = j + 1;
  }
  return rank;
}

}  // namespace

double rmse(const Volume3D& x, const Volume3D& ref, const Mask* mask) {
  require_same_grid(x, ref, "rmse");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i : masked_indices(ref, mask, "rmse")) {
    const double e = x[i] - ref[i];
    num += e * e;
    den += ref[i] * ref[i];
  }
  if (den == 0.0) throw NumericalError("rmse: reference is zero on the mask");
  return 100.0 * std::sqrt(num / den);
}

double psnr(const Volume3D& x, const Volume3D& ref, const Mask* mask) {
  require_same_grid(x, ref, "psnr");
  const auto idx = masked_indices(ref, mask, "psnr");
  double peak = 0.0;
  double se = 0.0;
  for (std::size_t i : idx) {
    peak = std::max(peak, std::abs(ref[i]));
    const double e = x[i] - ref[i];
    se += e * e;
  }
  const double rms = std::sqrt(se / static_cast<double>(idx.size()));
  if (rms == 0.0) return kPsnrCap;
  if (peak == 0.0) throw NumericalError("psnr: reference is zero on the mask");
  return std::min(kPsnrCap, 20.0 * std::log10(peak / rms));
}

double ssim(const Volume3D& x, const Volume3D& ref, const Mask* mask) {
  require_same_grid(x, ref, "ssim");
  const auto idx = masked_indices(ref, mask, "ssim");
  double lo = ref[idx.front()];
  double hi = lo;
  for (std::size_t i : idx) {
    lo = std::min(lo, ref[i]);
    hi = std::max(hi, ref[i]);
  }
  const double L = hi > lo ? hi - lo : 1.0;
  const double c1 = (0.01 * L) * (0.01 * L);
  const double c2 = (0.03 * L) * (0.03 * L);

  const Volume3D xx = hadamard(x, x);
  const Volume3D yy = hadamard(ref, ref);
  const Volume3D xy = hadamard(x, ref);
  const Volume3D mx = gaussian_smooth(x, kSsimSigma, kSsimSupport);
  const Volume3D my = gaussian_smooth(ref, kSsimSigma, kSsimSupport);
  const Volume3D sxx = gaussian_smooth(xx, kSsimSigma, kSsimSupport);
  const Volume3D syy = gaussian_smooth(yy, kSsimSigma, kSsimSupport);
  const Volume3D sxy = gaussian_smooth(xy, kSsimSigma, kSsimSupport);
  double acc = 0.0;
  for (std::size_t i : idx) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cxy = sxy[i] - mx[i] * my[i];
    const double num = (2.0 * mx[i] * my[i] + c1) * (2.0 * cxy + c2);
    const double den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2);
    acc += num / den;
  }
  return acc / static_cast<double>(idx.size());
}

std::vector<double> log_kernel() {
  const int half = kLogSupport / 2;
  const double s2 = kLogSigma * kLogSigma;
  std::vector<double> k;
  k.reserve(std::size_t(kLogSupport) * kLogSupport * kLogSupport);
  for (int x = -half; x <= half; ++x)
    for (int y = -half; y <= half; ++y)
      for (int z = -half; z <= half; ++z) {
        const double r2 = double(x * x + y * y + z * z);
        k.push_back((r2 - 3.0 * s2) / (s2 * s2) * std::exp(-r2 / (2.0 * s2)));
      }
  const double m = std::accumulate(k.begin(), k.end(), 0.0) / static_cast<double>(k.size());
  for (double& v : k) v -= m;
  return k;
}

Volume3D log_filter(const Volume3D& v) {
  const Dims& d = v.dims();
  const std::size_t s = std::size_t(kLogSupport);
  if (d.nx < s || d.ny < s || d.nz < s) {
    throw DimensionError("hfen: volume " + to_string(d) + " smaller than the 15^3 LoG kernel");
  }
  // Kernel centred on the origin with periodic wrap.
  Volume3D k(d, v.voxel_size());
  const auto kv = log_kernel();
  const long half = kLogSupport / 2;
  auto wrap = [](long i, std::size_t n) { return static_cast<std::size_t>((i + long(n)) % long(n)); };
  std::size_t t = 0;
  for (long x = -half; x <= half; ++x)
    for (long y = -half; y <= half; ++y)
      for (long z = -half; z <= half; ++z) k.at(wrap(x, d.nx), wrap(y, d.ny), wrap(z, d.nz)) = kv[t++];
  ComplexVolume3D fv = fft3(v);
  const ComplexVolume3D fk = fft3(k);
  for (std::size_t i = 0; i < fv.size(); ++i) fv[i] *= fk[i];
  return ifft3(fv).real();
}

double hfen(const Volume3D& x, const Volume3D& ref, const Mask* mask) {
  require_same_grid(x, ref, "hfen");
  const Volume3D lx = log_filter(x);
  const Volume3D lr = log_filter(ref);
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i : masked_indices(ref, mask, "hfen")) {
    const double e = lx[i] - lr[i];
    num += e * e;
    den += lr[i] * lr[i];
  }
  if (den == 0.0) throw NumericalError("hfen: filtered reference is zero on the mask");
  return 100.0 * std::sqrt(num / den);
}

double uncertainty_error_agreement(const Volume3D& sigma, const Volume3D& error, const Mask* mask) {
  require_same_grid(sigma, error, "uncertainty_error_agreement");
  const auto idx = masked_indices(sigma, mask, "uncertainty_error_agreement");
  std::vector<double> a;
  std::vector<double> b;
  a.reserve(idx.size());
  b.reserve(idx.size());
  for (std::size_t i : idx) {
    a.push_back(sigma[i]);
    b.push_back(error[i]);
  }
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(idx.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) {
    throw NumericalError("rank correlation undefined: constant input on the mask");
  }
  return sab / std::sqrt(saa * sbb);
}

RegionStats region_stats(const Volume3D& v, const Mask& mask) {
  const auto idx = masked_indices(v, &mask, "region_stats");
  RegionStats s;
  s.count = idx.size();
  for (std::size_t i : idx) s.mean += v[i];
  s.mean /= static_cast<double>(s.count);
  for (std::size_t i : idx) s.std += (v[i] - s.mean) * (v[i] - s.mean);
  s.std = std::sqrt(s.std / static_cast<double>(s.count));
  return s;
}

MetricReport evaluate(const Volume3D& x, const Volume3D& ref, const Mask* mask, std::string method,
                      std::string volume, double runtime_s) {
  MetricReport r;
  r.method = std::move(method);
  r.volume = std::move(volume);
  r.psnr = psnr(x, ref, mask);
  r.rmse = rmse(x, ref, mask);
  r.ssim = ssim(x, ref, mask);
  r.hfen = hfen(x, ref, mask);
  r.runtime_s = runtime_s;
  return r;
}

void to_json(json& j, const MetricReport& r) {
  j = json{{"method", r.method}, {"volume", r.volume}, {"psnr", r.psnr},
           {"rmse", r.rmse},     {"ssim", r.ssim},     {"hfen", r.hfen},
           {"runtime_s", r.runtime_s}};
  json regions = json::object();
  for (const auto& [name, s] : r.regions) {
    regions[name] = {{"mean", s.mean}, {"std", s.std}, {"count", s.count}};
  }
  j["regions"] = regions;
}

std::string csv_header() { return "method,volume,psnr,rmse,ssim,hfen,runtime_s"; }

std::string csv_row(const MetricReport& r) {
  std::ostringstream os;
  os << std::setprecision(10) << r.method << ',' << r.volume << ',' << r.psnr << ',' << r.rmse << ','
     << r.ssim << ',' << r.hfen << ',' << r.runtime_s;
  return os.str();
}

void write_csv(const std::filesystem::path& path, const std::vector<MetricReport>& reports) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << csv_header() << '\n';
  for (const auto& r : reports) out << csv_row(r) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace qsmlab::metrics
