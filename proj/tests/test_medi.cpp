#include <gtest/gtest.h>

#include <cmath>
#include <nlohmann/json.hpp>

#include "qsmlab/medi.hpp"
#include "qsmlab/phantom.hpp"
#include "testing.hpp"

using namespace qsmlab;
using qsmlab::testing::random_volume;

namespace {

struct Fixture {
  Volume3D chi;
  Volume3D b;
  Volume3D W;
  DipoleKernel k;
};

// Noiseless when `noisy` is false; sigma then only sets the weights.
Fixture make_fixture(const Dims& d, double sigma, std::uint64_t seed, bool noisy = true) {
  PhantomSpec s;
  s.dims = d;
  const double cx = d.nx / 2.0, cy = d.ny / 2.0, cz = d.nz / 2.0;
  const double u = d.nx / 16.0;
  s.primitives.push_back({Shape::Sphere, {cx - 3 * u, cy, cz}, {2.5 * u, 0, 0}, 0.1});
  s.primitives.push_back({Shape::Cuboid, {cx + 3 * u, cy + u, cz}, {1.5 * u, 2 * u, 2 * u}, -0.06});
  Fixture f;
  f.chi = make_phantom(s).chi;
  f.k = build_dipole_kernel(d, {});
  const NoiseModel n = uniform_noise(d, {}, sigma, seed);
  f.b = noisy ? add_noise(forward_field(f.chi, f.k), n) : forward_field(f.chi, f.k);
  f.W = likelihood_weight(n);
  return f;
}

}  // namespace

TEST(TvEnergy, HandValue) {
  Volume3D v({2, 2, 2}, {});
  v.at(1, 0, 0) = 1.0;
  const Mask M = Mask::ones({2, 2, 2}, {}, MaskRole::EdgeWeight);
  // A single unit voxel on a periodic 2-grid: two unit jumps per axis.
  EXPECT_DOUBLE_EQ(tv_energy(v, M, 0.5), 0.5 * 6.0);
  EXPECT_DOUBLE_EQ(tv_energy(v, M, 0.0), 0.0);
}

TEST(MediConfig, Validation) {
  MediConfig c;
  c.lambda = -1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = MediConfig{};
  c.tv_epsilon = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(nlohmann::json::parse(R"({"max_outer": 0})").get<MediConfig>(), ConfigError);
}

TEST(MediProblem, GradientMatchesFiniteDifferences) {
  const Dims d{8, 8, 8};
  const Fixture f = make_fixture(d, 0.01, 1);
  MediConfig c;
  c.lambda = 0.05;
  c.tv_epsilon = 1e-2;
  const MediProblem p(f.b, f.W, f.k, c);
  const Volume3D x = random_volume(d, 4, 0.05);
  const Volume3D g = p.gradient(x);
  const Volume3D dir = random_volume(d, 5);
  const double h = 1e-6;
  const double fd = (p.objective(x + dir * h) - p.objective(x - dir * h)) / (2 * h);
  EXPECT_NEAR(dot(g, dir), fd, 1e-6 * std::abs(fd));
}

TEST(MediProblem, NormalOperatorIsSymmetricPositive) {
  const Dims d{8, 8, 8};
  const Fixture f = make_fixture(d, 0.01, 2);
  MediConfig c;
  c.lambda = 0.01;
  const MediProblem p(f.b, f.W, f.k, c);
  const auto op = p.linearize(random_volume(d, 6, 0.05));
  const Volume3D u = random_volume(d, 7), v = random_volume(d, 8);
  const double uv = dot(op.apply(u), v);
  EXPECT_NEAR(uv, dot(u, op.apply(v)), 1e-10 * std::abs(uv));
  EXPECT_GT(dot(op.apply(u), u), 0.0);
}

TEST(MediSolve, TraceIsNonIncreasing) {
  const Dims d{16, 16, 16};
  const Fixture f = make_fixture(d, 0.01, 3);
  for (double lambda : {0.0, 1e-3, 1e-2}) {
    MediConfig c;
    c.lambda = lambda;
    c.max_outer = 8;
    const MediResult r = medi_solve(f.b, f.W, f.k, c);
    ASSERT_GE(r.trace.size(), 2u);
    for (std::size_t i = 1; i < r.trace.size(); ++i) {
      EXPECT_LE(r.trace[i].objective, r.trace[i - 1].objective) << "lambda " << lambda << " iter " << i;
    }
    EXPECT_LT(r.trace.back().objective, r.trace.front().objective);
    EXPECT_TRUE(r.chi.all_finite());
  }
}

TEST(MediSolve, ReconstructsBetterThanZero) {
  const Dims d{16, 16, 16};
  const Fixture f = make_fixture(d, 0.002, 4, false);
  MediConfig c;
  c.lambda = 1e-3;
  c.max_outer = 10;
  const MediResult r = medi_solve(f.b, f.W, f.k, c);
  EXPECT_LT(norm2(r.chi - f.chi), 0.8 * norm2(f.chi));
}

TEST(MediSolve, RejectsBadInput) {
  const Dims d{8, 8, 8};
  const Fixture f = make_fixture(d, 0.01, 5);
  Volume3D b = f.b;
  b[0] = std::nan("");
  EXPECT_THROW(medi_solve(b, f.W, f.k, MediConfig{}), NumericalError);
  EXPECT_THROW(medi_solve(f.b, Volume3D(d, {}, 0.0), f.k, MediConfig{}), ConfigError);
  EXPECT_THROW(medi_solve(f.b, f.W, build_dipole_kernel({8, 8, 6}, {}), MediConfig{}), DimensionError);
}
