#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "kinwass/errors.hpp"
#include "kinwass/vlasov.hpp"

using namespace kinwass;

namespace {

constexpr double kPi = std::numbers::pi;

ParticleEnsemble lattice(int d, std::size_t N, double vth, std::uint64_t seed) {
  return make_initial("uniform_perturbed", {{"amplitude", 0.05}, {"vth", vth}}, d, N, seed);
}

}  // namespace

TEST(Poisson, EigenmodeOneD) {
  // sigma = -1: -U'' = cos 2 pi x, so U = cos(2 pi x) / (4 pi^2) and U' = -sin(2 pi x) / (2 pi)
  const int n = 256;
  PoissonSolver solver(1, n);
  std::vector<double> rho(n);
  for (int j = 0; j < n; ++j) rho[j] = 1.0 + std::cos(2 * kPi * j / n);
  FieldState f;
  solver.solve(rho, -1, f);
  double err_u = 0, err_g = 0;
  for (int j = 0; j < n; ++j) {
    double x = static_cast<double>(j) / n;
    err_u = std::max(err_u, std::abs(f.U[j] - std::cos(2 * kPi * x) / (4 * kPi * kPi)));
    err_g = std::max(err_g, std::abs(f.gradU[j] + std::sin(2 * kPi * x) / (2 * kPi)));
  }
  EXPECT_LE(err_u, 1e-12);
  EXPECT_LE(err_g, 1e-12);
  // the gravitational sign flips the field
  FieldState g;
  solver.solve(rho, +1, g);
  for (int j = 0; j < n; ++j) EXPECT_NEAR(g.gradU[j], -f.gradU[j], 1e-14);
}

TEST(Poisson, EigenmodeTwoD) {
  const int n = 32;
  PoissonSolver solver(2, n);
  std::vector<double> rho(n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      rho[i * n + j] = 1.0 + 0.5 * std::cos(2 * kPi * i / n) * std::cos(4 * kPi * j / n);
  FieldState f;
  solver.solve(rho, -1, f);
  // -Laplace U = 0.5 cos(2 pi x) cos(4 pi y): |k|^2 = 20 pi^2
  double err = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double ex = 0.5 * std::cos(2 * kPi * i / n) * std::cos(4 * kPi * j / n) / (20 * kPi * kPi);
      err = std::max(err, std::abs(f.U[i * n + j] - ex));
    }
  EXPECT_LE(err, 1e-13);
}

TEST(Poisson, RandomDensityResidual) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int d : {1, 2, 3}) {
    int n = d == 1 ? 128 : (d == 2 ? 32 : 16);
    PoissonSolver solver(d, n);
    std::vector<double> rho(grid_cells(d, n));
    double mean = 0;
    for (auto& r : rho) mean += (r = u(rng));
    mean /= static_cast<double>(rho.size());
    for (auto& r : rho) r /= mean;
    FieldState f;
    solver.solve(rho, -1, f);
    EXPECT_LE(solver.residual(f, -1), 1e-10) << d;
  }
}

TEST(Poisson, RejectsNonUnitMean) {
  PoissonSolver solver(1, 16);
  FieldState f;
  EXPECT_ANY_THROW(solver.solve(std::vector<double>(16, 1.1), -1, f));
}

TEST(Deposit, MeanOneAndUniformLattice) {
  auto e = make_initial("uniform_perturbed", {{"amplitude", 0.0}}, 1, 512, 3);
  auto rho = deposit(e, 64);
  double mean = 0;
  for (double r : rho) mean += r;
  EXPECT_NEAR(mean / 64, 1.0, 1e-14);
  for (double r : rho) EXPECT_NEAR(r, 1.0, 1e-12);
  auto e2 = lattice(2, 1000, 0.1, 5);
  auto rho2 = deposit(e2, 16);
  mean = 0;
  for (double r : rho2) mean += r;
  EXPECT_NEAR(mean / 256, 1.0, 1e-13);
}

TEST(Interpolate, LinearBetweenNodes) {
  std::vector<double> g = {0.0, 1.0, 2.0, 3.0};
  double x = 0.375;  // between nodes 1 (0.25) and 2 (0.5)
  EXPECT_NEAR(interpolate(g.data(), 1, 4, &x), 1.5, 1e-15);
  double wrap = 0.875;  // between node 3 and node 0
  EXPECT_NEAR(interpolate(g.data(), 1, 4, &wrap), 1.5, 1e-15);
}

TEST(Boris, PreservesSpeed) {
  std::mt19937_64 rng(22);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    double v[3] = {g(rng), g(rng), g(rng)};
    double before = std::hypot(v[0], v[1], v[2]);
    boris_rotate(3, v, {g(rng), g(rng), g(rng)}, 0.1 * std::abs(g(rng)));
    EXPECT_NEAR(std::hypot(v[0], v[1], v[2]), before, 1e-14 * std::max(1.0, before));
  }
  // d = 2 with B along e3 is a planar rotation by angle close to B h
  double v[2] = {1.0, 0.0};
  boris_rotate(2, v, {0, 0, 1.0}, 1e-3);
  EXPECT_NEAR(std::hypot(v[0], v[1]), 1.0, 1e-15);
  EXPECT_NEAR(std::atan2(v[1], v[0]), -1e-3, 1e-9);
}

TEST(Simulation, ZeroFieldVpbMatchesVp) {
  auto e = lattice(2, 256, 0.1, 8);
  Simulation a(e, 16), b(e, 16);
  auto B = MagneticField::uniform({0, 0, 0});
  for (int s = 0; s < 1000; ++s) {
    a.step_vp(1e-3);
    b.step_vpb(B, 1e-3);
  }
  double diff = 0;
  for (std::size_t i = 0; i < e.x.size(); ++i) {
    diff = std::max(diff, std::abs(a.ensemble().x[i] - b.ensemble().x[i]));
    diff = std::max(diff, std::abs(a.ensemble().v[i] - b.ensemble().v[i]));
  }
  EXPECT_LE(diff, 1e-10);
}

TEST(Simulation, VpbNeedsTwoOrThreeDims) {
  Simulation s(lattice(1, 64, 0.1, 1), 16);
  EXPECT_THROW(s.step_vpb(MagneticField::uniform({0, 0, 1}), 1e-3), std::domain_error);
}

TEST(Simulation, ConservesMomentumAndEnergy) {
  auto e = make_initial("two_stream", {{"amplitude", 0.01}, {"vth", 0.02}, {"v0", 0.2}}, 1,
                        2048, 4);
  Simulation s(e, 64);
  double E0 = s.energy();
  auto P0 = s.momentum();
  for (int k = 0; k < 400; ++k) s.step_vp(1e-3);
  EXPECT_NEAR(s.momentum()[0], P0[0], 1e-12);
  EXPECT_LE(std::abs(s.energy() - E0), 1e-3 * std::abs(E0));
  EXPECT_NEAR(s.time(), 0.4, 1e-12);
}

TEST(Simulation, CflViolationNamesParticle) {
  auto e = lattice(1, 64, 0.0, 1);
  e.v[17] = 100.0;
  Simulation s(e, 64);
  auto [lim, who] = s.cfl_limit();
  EXPECT_EQ(who, 17u);
  EXPECT_NEAR(lim, 0.5 / 64 / 100.0, 1e-15);
  try {
    s.step_vp(2 * lim);
    FAIL() << "expected CflError";
  } catch (const CflError& err) {
    EXPECT_EQ(err.particle(), 17u);
  }
}

TEST(InitialData, KindsAndValidation) {
  auto ts = make_initial("two_stream", {{"v0", 0.5}}, 1, 100, 2);
  EXPECT_EQ(ts.size(), 100u);
  EXPECT_DOUBLE_EQ(ts.v[0], 0.5);
  EXPECT_DOUBLE_EQ(ts.v[1], -0.5);
  for (double x : ts.x) {
    EXPECT_GE(x, 0.0);
    EXPECT_LT(x, 1.0);
  }
  auto yd = make_initial("yudovich_datum", {{"profile", {{"type", "indicator"}}}}, 1, 1000, 3);
  for (double x : yd.x) EXPECT_LT(x, 0.5);
  EXPECT_THROW(make_initial("nope", {}, 1, 10, 1), ConfigError);
  EXPECT_THROW(make_initial("uniform_perturbed", {{"vth", -1.0}}, 1, 10, 1), ConfigError);
  EXPECT_THROW(make_initial("uniform_perturbed", {}, 1, 0, 1), ConfigError);
  // same seed, same ensemble
  auto again = make_initial("yudovich_datum", {{"profile", {{"type", "indicator"}}}}, 1, 1000, 3);
  EXPECT_EQ(again.x, yd.x);
}

TEST(Norms, GridLpAndYudovich) {
  // half indicator at height 2: ||h||_r = 2^{1 - 1/r}
  std::vector<double> h(1000, 0.0);
  for (int i = 0; i < 500; ++i) h[i] = 2.0;
  for (double r : {1.0, 2.0, 4.0}) EXPECT_NEAR(grid_lp_norm(h, r), std::pow(2.0, 1 - 1 / r), 1e-12);
  EXPECT_DOUBLE_EQ(grid_lp_norm(h, INFINITY), 2.0);
  // bounded family: the sup over r tends to ||h||_inf along the grid
  auto grid = default_r_grid();
  EXPECT_DOUBLE_EQ(grid.front(), 1.0);
  EXPECT_DOUBLE_EQ(grid.back(), 4096.0);
  auto nb = yudovich_norm(h, GrowthFunction::bounded(), grid);
  EXPECT_NEAR(nb.value, std::pow(2.0, 1 - 1 / 4096.0), 1e-12);
  // Orlicz(1): Theta(r) = r on r >= 1, so 2^{1-1/r}/r peaks at r = 1 here
  auto no = yudovich_norm(h, GrowthFunction::orlicz(1), grid);
  EXPECT_NEAR(no.value, 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(no.attained_r, 1.0);
}

TEST(Norms, VelocityMoment) {
  ParticleEnsemble e;
  e.d = 2;
  e.x = {0.1, 0.1, 0.2, 0.2};
  e.v = {3.0, 4.0, 0.0, 0.0};
  e.w = {0.5, 0.5};
  // (0.5 * 5^r)^{1/r} / Theta(r) with Theta = 1
  auto m = moment_yudovich_norm(e, GrowthFunction::bounded(), {1.0, 2.0});
  EXPECT_NEAR(m.value, 5.0 * std::sqrt(0.5), 1e-14);
}

TEST(MagneticField, UniformSup) {
  auto B = MagneticField::uniform({0, 0, 1.5});
  EXPECT_DOUBLE_EQ(B.sup_norm, 1.5);
  EXPECT_EQ(B.loglip_const, 0.0);
  EXPECT_NEAR(B.sampled_sup(2, 1.0), 1.5, 1e-15);
  EXPECT_FALSE(B.is_zero());
  EXPECT_TRUE(MagneticField::uniform({0, 0, 0}).is_zero());
}

TEST(ForceProbe, SmoothFieldHasBoundedRatios) {
  const int n = 128;
  PoissonSolver solver(1, n);
  std::vector<double> rho(n);
  for (int j = 0; j < n; ++j) rho[j] = 1.0 + 0.5 * std::cos(2 * kPi * j / n);
  FieldState f;
  solver.solve(rho, -1, f);
  auto pr = force_regularity_probe(f, GrowthFunction::bounded(), 1, 500, 9);
  EXPECT_EQ(pr.pairs, 500u);
  EXPECT_TRUE(std::isfinite(pr.modulus_ratio));
  EXPECT_LT(pr.modulus_ratio, 1.0);
  EXPECT_LT(pr.sup_ratio, 1.0);
}
