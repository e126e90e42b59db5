#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "kinwass/errors.hpp"
#include "kinwass/transport.hpp"

using namespace kinwass;

namespace {

EmpiricalMeasure cloud(std::mt19937_64& rng, int d, std::size_t n, bool vel,
                       Domain dom = Domain::Torus) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> x(n * d), v(n * d, 0.0);
  for (auto& e : x) e = u(rng);
  if (vel)
    for (auto& e : v) e = g(rng);
  return EmpiricalMeasure::uniform_weights(d, dom, x, v);
}

// Oracle: cost evaluated independently of the library and minimized over permutations.
double own_cost(const EmpiricalMeasure& a, std::size_t i, const EmpiricalMeasure& b, std::size_t j,
                double p) {
  double dx = 0, dv = 0;
  for (int k = 0; k < a.d; ++k) {
    double t = std::abs(a.x[i * a.d + k] - b.x[j * a.d + k]);
    if (a.domain == Domain::Torus) t = std::min(t, 1 - t);
    dx += t * t;
    double s = a.v[i * a.d + k] - b.v[j * a.d + k];
    dv += s * s;
  }
  return std::pow(std::sqrt(dx), p) + std::pow(std::sqrt(dv), p);
}

double brute(const EmpiricalMeasure& a, const EmpiricalMeasure& b, double p) {
  std::vector<std::size_t> perm(a.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = INFINITY;
  do {
    double s = 0;
    for (std::size_t i = 0; i < perm.size(); ++i) s += own_cost(a, i, b, perm[i], p);
    best = std::min(best, s / a.size());
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace

TEST(PhaseCost, HandExamples) {
  double x = 0.1, y = 0.9, v = 0.3;
  auto c = phase_cost(&x, &v, &y, &v, 1, 1.0, Domain::Torus);
  EXPECT_NEAR(c.pos, 0.2, 1e-15);
  EXPECT_EQ(c.vel, 0.0);
  auto z = phase_cost(&x, &v, &x, &v, 1, 2.0, Domain::Torus);
  EXPECT_EQ(z.pos, 0.0);
  EXPECT_EQ(z.vel, 0.0);
  auto e = phase_cost({0, 0}, {1, 1}, {3, 4}, {1, 1}, 2.0, Domain::Euclidean);
  EXPECT_NEAR(e.pos, 25.0, 1e-12);
  EXPECT_EQ(e.vel, 0.0);
  EXPECT_THROW(phase_cost({0, 0}, {1, 1}, {3}, {1}, 2.0, Domain::Euclidean), std::invalid_argument);
}

TEST(Measure, Validation) {
  EmpiricalMeasure m;
  m.d = 1;
  m.x = {0.5};
  m.v = {0.0};
  m.w = {0.5};
  EXPECT_THROW(m.validate(), std::invalid_argument);
  m.w = {1.0};
  m.x = {1.5};
  EXPECT_THROW(m.validate(), std::invalid_argument);
  m.x = {0.5};
  EXPECT_NO_THROW(m.validate());
}

TEST(Wasserstein, IdentityAndSingleParticle) {
  std::mt19937_64 rng(1);
  auto a = cloud(rng, 2, 20, true);
  EXPECT_NEAR(wasserstein_p(a, a, 2).value, 0.0, 1e-15);
  auto s1 = EmpiricalMeasure::uniform_weights(1, Domain::Torus, {0.1}, {1.0});
  auto s2 = EmpiricalMeasure::uniform_weights(1, Domain::Torus, {0.4}, {-1.0});
  EXPECT_NEAR(wasserstein_p(s1, s2, 2).value, std::sqrt(0.09 + 4.0), 1e-14);
}

TEST(Wasserstein, BruteForceN6) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 30; ++t) {
    double p = 1 + t % 3;
    auto a = cloud(rng, 1 + t % 2, 6, t % 4 != 0), b = cloud(rng, 1 + t % 2, 6, t % 4 != 0);
    double bf = brute(a, b, p);
    EXPECT_NEAR(wasserstein_p(a, b, p).plan.cost(), bf, 1e-12 * std::max(1.0, bf));
  }
}

TEST(Wasserstein, CircleSolverMatchesBruteForce) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 40; ++t) {
    double p = t % 2 ? 1.0 : 2.0;
    auto a = cloud(rng, 1, 7, false), b = cloud(rng, 1, 7, false);
    double bf = brute(a, b, p);
    EXPECT_NEAR(wasserstein_p(a, b, p).plan.cost(), bf, 1e-12);
  }
}

TEST(Wasserstein, UnequalWeightsByLinearProgramOracle) {
  // 2 x 2 with a closed-form optimum: moving mass 0.3 across is forced.
  EmpiricalMeasure a, b;
  a.d = b.d = 1;
  a.domain = b.domain = Domain::Euclidean;
  a.x = {0.0, 1.0};
  a.v = {0.0, 0.0};
  a.w = {0.8, 0.2};
  b.x = {0.0, 1.0};
  b.v = {0.0, 0.0};
  b.w = {0.5, 0.5};
  auto r = wasserstein_p(a, b, 1.0);
  EXPECT_NEAR(r.plan.cost(), 0.3, 1e-13);
  EXPECT_LE(r.plan.marginal_error(a, b), 1e-12);
  // 3 x 2 random: compare against enumeration of vertex plans on a fine mass grid
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  for (int t = 0; t < 10; ++t) {
    auto m = cloud(rng, 1, 3, true), n = cloud(rng, 1, 2, true);
    double s = 0;
    for (auto& w : m.w) s += (w = u(rng));
    for (auto& w : m.w) w /= s;
    n.w = {0.35, 0.65};
    // plan: pi(i,0) = q_i with sum q = 0.35, 0 <= q_i <= w_i; the LP optimum is greedy
    // in the cost difference c(i,0) - c(i,1)
    std::vector<std::size_t> idx{0, 1, 2};
    std::vector<double> diff(3);
    for (std::size_t i = 0; i < 3; ++i) diff[i] = own_cost(m, i, n, 0, 2) - own_cost(m, i, n, 1, 2);
    std::sort(idx.begin(), idx.end(), [&](auto x, auto y) { return diff[x] < diff[y]; });
    double left = 0.35, cost = 0;
    for (auto i : idx) {
      double q = std::min(left, m.w[i]);
      left -= q;
      cost += q * own_cost(m, i, n, 0, 2) + (m.w[i] - q) * own_cost(m, i, n, 1, 2);
    }
    auto r2 = wasserstein_p(m, n, 2.0);
    EXPECT_NEAR(r2.plan.cost(), cost, 1e-12);
    EXPECT_LE(r2.plan.marginal_error(m, n), 1e-10);
  }
}

TEST(Wasserstein, MetricProperties) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 10; ++t) {
    double p = 1 + t % 2;
    auto a = cloud(rng, 2, 30, true), b = cloud(rng, 2, 30, true), c = cloud(rng, 2, 30, true);
    double ab = wasserstein_p(a, b, p).value, ba = wasserstein_p(b, a, p).value;
    double bc = wasserstein_p(b, c, p).value, ac = wasserstein_p(a, c, p).value;
    EXPECT_NEAR(ab, ba, 1e-12);
    EXPECT_LE(ac, ab + bc + 1e-10);
  }
}

TEST(Wasserstein, PlanCostsAndMarginals) {
  std::mt19937_64 rng(6);
  auto a = cloud(rng, 2, 40, true), b = cloud(rng, 2, 40, true);
  auto r = wasserstein_p(a, b, 2);
  double pos = 0, vel = 0;
  for (const auto& e : r.plan.pairs) {
    auto c = phase_cost(a.xi(e.i), a.vi(e.i), b.xi(e.j), b.vi(e.j), 2, 2, Domain::Torus);
    pos += e.mass * c.pos;
    vel += e.mass * c.vel;
  }
  EXPECT_NEAR(r.plan.cost_pos, pos, 1e-12 * pos);
  EXPECT_NEAR(r.plan.cost_vel, vel, 1e-12 * vel);
  EXPECT_LE(r.plan.marginal_error(a, b), 1e-12);
}

TEST(Wasserstein, MonotoneInP) {
  // two equal-weight points at distance 0.25 and 0.5 from their partners
  auto a = EmpiricalMeasure::uniform_weights(1, Domain::Euclidean, {0.0, 10.0}, {0.0, 0.0});
  auto b = EmpiricalMeasure::uniform_weights(1, Domain::Euclidean, {0.25, 10.5}, {0.0, 0.0});
  double prev = 0;
  for (double p : {1.0, 2.0, 3.0, 4.0}) {
    double w = wasserstein_p(a, b, p).value;
    EXPECT_NEAR(w, std::pow(0.5 * (std::pow(0.25, p) + std::pow(0.5, p)), 1 / p), 1e-14);
    EXPECT_GE(w, prev);
    prev = w;
  }
}

TEST(Wasserstein, CapacityErrors) {
  std::mt19937_64 rng(7);
  auto a = cloud(rng, 1, 10, true), b = cloud(rng, 1, 10, true);
  ExactOptions o;
  o.cap_equal = 5;
  EXPECT_THROW(wasserstein_p(a, b, 1, o), CapacityError);
}

TEST(Sinkhorn, NearExactAndFeasible) {
  std::mt19937_64 rng(8);
  auto a = cloud(rng, 1, 128, true), b = cloud(rng, 1, 128, true);
  double exact = wasserstein_p(a, b, 2).value;
  auto s = sinkhorn_wp(a, b, 2);
  EXPECT_TRUE(s.plan.approximate);
  EXPECT_LE(std::abs(s.value - exact) / exact, 0.02);
  EXPECT_GE(s.plan.cost() + 1e-12, exact * exact);
  // the gap certifies cost - optimum
  EXPECT_LE(s.plan.cost() - s.plan.gap, exact * exact * (1 + 1e-9) + 1e-12);
  EXPECT_LE(s.plan.marginal_error(a, b), 1e-10);
}

TEST(Sinkhorn, IdenticalMeasuresNearZero) {
  std::mt19937_64 rng(9);
  auto a = cloud(rng, 1, 32, true);
  auto s = sinkhorn_wp(a, a, 2);
  auto m = wasserstein_p(a, cloud(rng, 1, 32, true), 2).value;
  EXPECT_LT(s.value, 0.05 * m);
}

TEST(Pushforward, FreeTransportDiracs) {
  auto a = EmpiricalMeasure::uniform_weights(1, Domain::Torus, {0.1}, {0.5});
  auto b = EmpiricalMeasure::uniform_weights(1, Domain::Torus, {0.15}, {0.7});
  auto plan = diagonal_plan(a, b, 2.0);
  auto fl = [&](const EmpiricalMeasure& m) {
    return Flow([&m](std::size_t i, double t, double* x, double* v) {
      x[0] = m.x[i] + t * m.v[i];
      x[0] -= std::floor(x[0]);
      v[0] = m.v[i];
    });
  };
  auto c0 = pushforward_costs(plan, a, b, fl(a), fl(b), 0.0, 2.0);
  EXPECT_NEAR(c0.pos, plan.cost_pos, 1e-16);
  EXPECT_NEAR(c0.vel, plan.cost_vel, 1e-16);
  for (double t : {0.0, 0.05, 0.1}) {
    auto c = pushforward_costs(plan, a, b, fl(a), fl(b), t, 2.0);
    double dx = 0.05 + t * 0.2;
    EXPECT_NEAR(c.pos, dx * dx, 1e-14);
    EXPECT_NEAR(c.vel, 0.04, 1e-14);
  }
  auto same = pushforward_costs(plan, a, a, fl(a), fl(a), 0.3, 2.0);
  EXPECT_EQ(same.pos, 0.0);
  EXPECT_EQ(same.vel, 0.0);
}
