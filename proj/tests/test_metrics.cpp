#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <random>

#include "qsmlab/metrics.hpp"
#include "testing.hpp"

using namespace qsmlab;
using namespace qsmlab::metrics;
using qsmlab::testing::random_volume;

namespace {

// Brute-force SSIM: direct 3D window sums, no separability.
double naive_ssim(const Volume3D& x, const Volume3D& y) {
  const Dims d = x.dims();
  const int h = kSsimSupport / 2;
  const double lo = *std::min_element(y.values().begin(), y.values().end());
  const double hi = *std::max_element(y.values().begin(), y.values().end());
  const double L = hi > lo ? hi - lo : 1.0;
  const double c1 = (0.01 * L) * (0.01 * L), c2 = (0.03 * L) * (0.03 * L);
  double total = 0.0;
  for (long i = 0; i < long(d.nx); ++i)
    for (long j = 0; j < long(d.ny); ++j)
      for (long k = 0; k < long(d.nz); ++k) {
        double sw = 0, mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
        for (long a = std::max(0L, i - h); a <= std::min(long(d.nx) - 1, i + h); ++a)
          for (long b = std::max(0L, j - h); b <= std::min(long(d.ny) - 1, j + h); ++b)
            for (long c = std::max(0L, k - h); c <= std::min(long(d.nz) - 1, k + h); ++c) {
              const double r2 = double((a - i) * (a - i) + (b - j) * (b - j) + (c - k) * (c - k));
              const double w = std::exp(-r2 / (2 * kSsimSigma * kSsimSigma));
              const double u = x.at(a, b, c), v = y.at(a, b, c);
              sw += w;
              mx += w * u;
              my += w * v;
              xx += w * u * u;
              yy += w * v * v;
              xy += w * u * v;
            }
        mx /= sw, my /= sw, xx /= sw, yy /= sw, xy /= sw;
        const double vx = xx - mx * mx, vy = yy - my * my, cxy = xy - mx * my;
        total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      }
  return total / double(x.size());
}

}  // namespace

TEST(Metrics, RmseAndPsnrHandValues) {
  const Volume3D ref = random_volume({6, 5, 4}, 1);
  EXPECT_NEAR(rmse(ref * 1.1, ref), 10.0, 1e-12);
  EXPECT_EQ(rmse(ref, ref), 0.0);

  Volume3D r({4, 4, 4}, {}, 0.5);
  r[0] = 1.0;
  Volume3D x = r;
  for (double& v : x.data()) v += 0.01;
  EXPECT_NEAR(psnr(x, r), 40.0, 1e-10);
  EXPECT_EQ(psnr(r, r), kPsnrCap);
  EXPECT_THROW(rmse(ref, Volume3D(ref.dims(), {}, 0.0)), NumericalError);
  EXPECT_THROW(rmse(ref, Volume3D({6, 5, 3}, {})), DimensionError);
}

TEST(Metrics, MaskRestrictsEvaluation) {
  const Volume3D ref = random_volume({4, 4, 4}, 2);
  Volume3D x = ref;
  Volume3D m(ref.dims(), {}, 1.0);
  x[3] += 100.0;
  m[3] = 0.0;
  const Mask mask(m, MaskRole::Tissue);
  EXPECT_NEAR(rmse(x, ref, &mask), 0.0, 1e-12);
  EXPECT_GT(rmse(x, ref), 1.0);
  const Mask empty(Volume3D(ref.dims(), {}, 0.0), MaskRole::Tissue);
  EXPECT_THROW(rmse(x, ref, &empty), ConfigError);
}

TEST(Metrics, SsimMatchesBruteForceAndSign) {
  const Volume3D ref = random_volume({9, 8, 7}, 3);
  const Volume3D x = ref + random_volume({9, 8, 7}, 4, 0.5);
  EXPECT_NEAR(ssim(x, ref), naive_ssim(x, ref), 1e-10);
  EXPECT_EQ(ssim(ref, ref), 1.0);
  EXPECT_EQ(ssim(x, x), 1.0);
  // Anti-correlated structure on a positive background.
  const Volume3D pos = ref + Volume3D(ref.dims(), {}, 10.0);
  EXPECT_LT(ssim(Volume3D(ref.dims(), {}, 20.0) - pos, pos), 0.0);
}

TEST(Metrics, PsnrMonotoneUnderAddedNoise) {
  const Volume3D ref = random_volume({8, 8, 8}, 30);
  const Volume3D n = random_volume({8, 8, 8}, 31);
  for (int t = 0; t < 20; ++t) {
    const double a = 0.01 * (t + 1);
    EXPECT_GT(psnr(ref + n * a, ref), psnr(ref + n * (a * 1.5), ref));
  }
  EXPECT_NEAR(rmse(ref * 2.6, ref * 2.0), rmse(ref * 1.3, ref), 1e-12);
  EXPECT_EQ(rmse(Volume3D(ref.dims(), {}, 0.0), ref), 100.0);
}

TEST(Metrics, LogKernelShape) {
  const auto k = log_kernel();
  ASSERT_EQ(k.size(), std::size_t(kLogSupport * kLogSupport * kLogSupport));
  double sum = 0.0;
  for (double v : k) sum += v;
  EXPECT_NEAR(sum, 0.0, 1e-12);
  const int h = kLogSupport / 2;
  auto at = [&](int x, int y, int z) {
    return k[std::size_t(((x + h) * kLogSupport + (y + h)) * kLogSupport + (z + h))];
  };
  EXPECT_DOUBLE_EQ(at(1, 2, 3), at(-3, 1, -2));
  EXPECT_LT(at(0, 0, 0), 0.0);
  // Differences of the kernel remove the mean offset: compare to the closed form.
  const double s2 = kLogSigma * kLogSigma;
  auto g = [&](double r2) { return (r2 - 3 * s2) / (s2 * s2) * std::exp(-r2 / (2 * s2)); };
  EXPECT_NEAR(at(2, 0, 0) - at(0, 0, 0), g(4) - g(0), 1e-12);
}

TEST(Metrics, LogFilterIsCircularConvolution) {
  const Dims d{15, 16, 15};
  const Volume3D v = random_volume(d, 5);
  const Volume3D f = log_filter(v);
  const auto k = log_kernel();
  const int h = kLogSupport / 2;
  for (const auto& p : {std::array<long, 3>{0, 0, 0}, {7, 3, 14}, {14, 15, 1}}) {
    double acc = 0.0;
    std::size_t t = 0;
    for (long a = -h; a <= h; ++a)
      for (long b = -h; b <= h; ++b)
        for (long c = -h; c <= h; ++c, ++t) {
          acc += k[t] * v.at(std::size_t((p[0] - a + 15) % 15), std::size_t((p[1] - b + 16) % 16),
                             std::size_t((p[2] - c + 15) % 15));
        }
    EXPECT_NEAR(f.at(p[0], p[1], p[2]), acc, 1e-10);
  }
  EXPECT_THROW(log_filter(Volume3D({14, 16, 16}, {})), DimensionError);
}

TEST(Metrics, HfenIgnoresConstantOffset) {
  const Volume3D ref = random_volume({16, 16, 16}, 6);
  EXPECT_LT(hfen(ref + Volume3D(ref.dims(), {}, 0.3), ref), 1e-9);
  EXPECT_NEAR(hfen(ref * 1.2, ref), 20.0, 1e-9);
  EXPECT_EQ(hfen(ref, ref), 0.0);
}

TEST(Metrics, HfenFavoursFineStructureErrors) {
  // Two perturbations of a blocky fixture with equal RMSE: blurring the
  // edges versus a slow bias wave. HFEN should weigh the blur far more.
  const std::size_t n = 32;
  Volume3D ref({n, n, n}, {});
  std::mt19937_64 rng(10);
  std::uniform_int_distribution<std::size_t> pos(2, n - 6);
  for (int b = 0; b < 12; ++b) {
    const std::size_t x0 = pos(rng), y0 = pos(rng), z0 = pos(rng);
    const double v = (b % 2 ? 0.1 : -0.05);
    for (std::size_t x = x0; x < x0 + 4; ++x)
      for (std::size_t y = y0; y < y0 + 3; ++y)
        for (std::size_t z = z0; z < z0 + 4; ++z) ref.at(x, y, z) = v;
  }
  Volume3D smooth = ref;
  for (int axis = 0; axis < 3; ++axis) {
    const Volume3D src = smooth;
    for (std::size_t x = 0; x < n; ++x)
      for (std::size_t y = 0; y < n; ++y)
        for (std::size_t z = 0; z < n; ++z) {
          std::array<std::size_t, 3> lo{x, y, z}, hi{x, y, z};
          lo[axis] = (lo[axis] + n - 1) % n;
          hi[axis] = (hi[axis] + 1) % n;
          smooth.at(x, y, z) = 0.25 * src.at(lo[0], lo[1], lo[2]) + 0.5 * src.at(x, y, z) +
                               0.25 * src.at(hi[0], hi[1], hi[2]);
        }
  }
  Volume3D wave(ref.dims(), {});
  for (std::size_t x = 0; x < n; ++x)
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t z = 0; z < n; ++z) wave.at(x, y, z) = std::cos(2.0 * M_PI * double(x) / double(n));
  wave *= norm2(smooth - ref) / norm2(wave);
  EXPECT_NEAR(rmse(ref + wave, ref), rmse(smooth, ref), 1e-9);
  EXPECT_GT(hfen(smooth, ref), 2.0 * hfen(ref + wave, ref));
  EXPECT_GT(rmse(ref + Volume3D(ref.dims(), {}, 0.01), ref), 1.0);
  EXPECT_LT(hfen(ref + Volume3D(ref.dims(), {}, 0.01), ref), 1e-9);
}

TEST(Spearman, HandValuesAndTies) {
  const Dims d{4, 1, 1};
  auto vol = [&](std::vector<double> v) { return Volume3D(d, {}, std::move(v)); };
  EXPECT_NEAR(uncertainty_error_agreement(vol({1, 2, 3, 4}), vol({1, 8, 27, 64})), 1.0, 1e-15);
  EXPECT_NEAR(uncertainty_error_agreement(vol({1, 2, 3, 4}), vol({4, 3, 2, 1})), -1.0, 1e-15);
  EXPECT_NEAR(uncertainty_error_agreement(vol({1, 2, 2, 3}), vol({1, 3, 2, 4})), 4.5 / std::sqrt(22.5), 1e-15);
  EXPECT_THROW(uncertainty_error_agreement(vol({1, 1, 1, 1}), vol({1, 2, 3, 4})), NumericalError);
}

TEST(Spearman, IndependentInputsNearZero) {
  const Dims d{20, 20, 20};
  const Volume3D a = random_volume(d, 7), b = random_volume(d, 8);
  EXPECT_LT(std::abs(uncertainty_error_agreement(a, b)), 3.0 / std::sqrt(double(d.size())));
}

TEST(Metrics, RegionStatsAndReports) {
  Volume3D v({2, 2, 1}, {}, std::vector<double>{1, 2, 3, 10});
  Volume3D m({2, 2, 1}, {}, std::vector<double>{1, 1, 1, 0});
  const RegionStats s = region_stats(v, Mask(m, MaskRole::Lesion));
  EXPECT_EQ(s.count, 3u);
  EXPECT_DOUBLE_EQ(s.mean, 2.0);
  EXPECT_NEAR(s.std, std::sqrt(2.0 / 3.0), 1e-15);

  const Volume3D ref = random_volume({16, 16, 16}, 9);
  MetricReport r = evaluate(ref * 1.1, ref, nullptr, "medi", "vol0", 1.5);
  EXPECT_NEAR(r.rmse, 10.0, 1e-12);
  EXPECT_EQ(csv_header(), "method,volume,psnr,rmse,ssim,hfen,runtime_s");
  EXPECT_EQ(csv_row(r).substr(0, 10), "medi,vol0,");
  const nlohmann::json j = r;
  EXPECT_EQ(j.at("method"), "medi");

  const auto path = std::filesystem::temp_directory_path() / "qsmlab_metrics.csv";
  write_csv(path, {r, r});
  std::ifstream in(path);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  EXPECT_EQ(lines, 3);
  std::filesystem::remove(path);
}
