#pragma once

#include <filesystem>
#include <map>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <string>
#include <vector>

#include "qsmlab/volume.hpp"

namespace qsmlab::metrics {

inline constexpr double kPsnrCap = 99.0;
inline constexpr double kSsimSigma = 1.5;
inline constexpr int kSsimSupport = 11;
inline constexpr double kLogSigma = 1.5;
inline constexpr int kLogSupport = 15;

// All metrics take an optional mask; absent means the whole volume. Mask
// voxels with weight > 0 are included.

// 100 ||x - ref|| / ||ref|| over the mask, percent.
double rmse(const Volume3D& x, const Volume3D& ref, const Mask* mask = nullptr);

// 20 log10(max |ref| / rms error) over the mask, capped at kPsnrCap dB.
double psnr(const Volume3D& x, const Volume3D& ref, const Mask* mask = nullptr);

// Mean local SSIM over the mask. Gaussian window (sigma 1.5 voxels, 11^3
// support, truncated at the volume boundary and renormalised), data range =
// ref range over the mask (1 if constant), K1 = 0.01, K2 = 0.03.
double ssim(const Volume3D& x, const Volume3D& ref, const Mask* mask = nullptr);

// Zero-mean 15^3 Laplacian-of-Gaussian kernel (sigma 1.5 voxels), z fastest.
std::vector<double> log_kernel();
// Circular convolution of v with log_kernel().
Volume3D log_filter(const Volume3D& v);
// 100 ||LoG(x) - LoG(ref)|| / ||LoG(ref)|| over the mask, percent.
double hfen(const Volume3D& x, const Volume3D& ref, const Mask* mask = nullptr);

// Spearman rank correlation (average ranks for ties) of sigma vs error over
// the mask. Throws NumericalError when either input is constant there.
double uncertainty_error_agreement(const Volume3D& sigma, const Volume3D& error,
                                   const Mask* mask = nullptr);

struct RegionStats {
  double mean = 0.0;
  double std = 0.0;
  std::size_t count = 0;
};

RegionStats region_stats(const Volume3D& v, const Mask& mask);

struct MetricReport {
  std::string method;
  std::string volume;
  double psnr = 0.0;
  double rmse = 0.0;
  double ssim = 0.0;
  double hfen = 0.0;
  double runtime_s = 0.0;
  std::map<std::string, RegionStats> regions;
};

MetricReport evaluate(const Volume3D& x, const Volume3D& ref, const Mask* mask,
                      std::string method, std::string volume, double runtime_s = 0.0);

void to_json(nlohmann::json& j, const MetricReport& r);

// Column layout: method,volume,psnr,rmse,ssim,hfen,runtime_s
std::string csv_header();
std::string csv_row(const MetricReport& r);
void write_csv(const std::filesystem::path& path, const std::vector<MetricReport>& reports);

}  // namespace qsmlab::metrics
