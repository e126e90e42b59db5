#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "kinwass/config.hpp"
#include "kinwass/errors.hpp"
#include "kinwass/stability.hpp"

using namespace kinwass;

TEST(Weights, AOfT) {
  EXPECT_DOUBLE_EQ(A_of_t(2, 3, 1).value, 3.0);
  EXPECT_DOUBLE_EQ(A_of_t(1, 1, 2).value, 1.0);
  EXPECT_NEAR(A_of_t(2, 2, 2).value, 4.0, 1e-14);
  auto fl = A_of_t(0.5, 2, 1);
  EXPECT_TRUE(fl.floored);
  EXPECT_DOUBLE_EQ(fl.value, 2.0);
  EXPECT_FALSE(A_of_t(1, 1, 1).floored);
}

TEST(Weights, JOfT) {
  for (double p : {1.0, 2.0, 3.0}) {
    auto cfg = BoundConfig::make(GrowthFunction::bounded(), p, 1);
    EXPECT_DOUBLE_EQ(J_of_t(cfg, 0.0), p);
    EXPECT_GT(J_of_t(cfg, 2.0), J_of_t(cfg, 1.0));
  }
  auto cfg = BoundConfig::make(GrowthFunction::orlicz(1), 1, 1);
  for (double A : {0.5, 1.0, 7.0}) EXPECT_NEAR(J_of_t(cfg, 2 * A), 2 * J_of_t(cfg, A) - 1, 1e-12);
}

TEST(Weights, MagnetizedJReducesWithoutMomentTerms) {
  auto cfg = BoundConfig::make(GrowthFunction::orlicz(1), 2, 2);
  cfg.gf_bar = GrowthFunction::orlicz(1);
  cfg.B_sup = 1.5;
  auto tilde = cfg;
  tilde.gf = *cfg.gf_bar;
  EXPECT_NEAR(vpb_J_tilde(cfg, 3.0, 1.0, 0.0, 0.0), J_of_t(tilde, 3.0), 1e-12);
  double prev = 0;
  for (double t : {0.0, 0.5, 1.0, 2.0}) {
    double j = vpb_J_tilde(cfg, 3.0, t, 2.0, t);
    EXPECT_GT(j, prev);
    prev = j;
  }
  EXPECT_THROW(C_B_tilde(BoundConfig::make(GrowthFunction::bounded(), 1, 2)),
               std::invalid_argument);
}

TEST(Weights, ExpWeightedIntegral) {
  // g = 1: int_0^t e^{(t-s)B} ds = (e^{tB} - 1) / B
  std::vector<double> t, g;
  for (int i = 0; i <= 2000; ++i) {
    t.push_back(i * 1e-3);
    g.push_back(1.0);
  }
  auto out = exp_weighted_integral(t, g, 0.7);
  EXPECT_EQ(out[0], 0.0);
  EXPECT_NEAR(out.back(), std::expm1(1.4) / 0.7, 1e-6);
  auto flat = exp_weighted_integral(t, g, 0.0);
  EXPECT_NEAR(flat.back(), 2.0, 1e-12);
}

TEST(Bound, StartsAboveInitialDistance) {
  for (auto gf : {GrowthFunction::bounded(), GrowthFunction::orlicz(1), GrowthFunction::orlicz(2)})
    for (double p : {1.0, 2.0}) {
      auto cfg = BoundConfig::make(gf, p, 1);
      for (double w0 : {1e-12, 1e-8, 1e-5}) {
        EXPECT_GE(bound_value(w0, 0.0, cfg), w0 * (1 - 1e-12)) << gf.name() << p << w0;
        EXPECT_NEAR(bound_value(w0, 0.0, cfg), phi_inv(gf, p, cfg.consts, w0),
                    1e-9 * phi_inv(gf, p, cfg.consts, w0));
      }
    }
}

TEST(Bound, CurveIsConstantWithoutGrowth) {
  auto cfg = BoundConfig::make(GrowthFunction::orlicz(1), 1, 1);
  auto curve = bound_curve(1e-8, [](double) { return 0.0; }, cfg);
  double b0 = curve(0.0);
  for (double t : {0.5, 1.0, 3.0}) EXPECT_DOUBLE_EQ(curve(t), b0);
}

TEST(Bound, CurveLoosensAsJAccumulates) {
  auto cfg = BoundConfig::make(GrowthFunction::bounded(), 1, 1);
  const double w0 = 1e-8;
  double budget = admissible_budget(w0, cfg);
  auto curve = bound_curve(w0, [budget](double t) { return 0.1 * budget * t; }, cfg);
  double prev = 0;
  for (int i = 0; i <= 90; ++i) {
    double b = curve(0.1 * i);
    EXPECT_GE(b, prev);
    prev = b;
  }
  EXPECT_THROW(curve(10.5), RegimeError);
}

TEST(Bound, ClosedFormsMatchCurveWithExactInverse) {
  for (auto gf : {GrowthFunction::bounded(), GrowthFunction::orlicz(1), GrowthFunction::orlicz(2)})
    for (double p : {1.0, 2.0}) {
      auto cfg = BoundConfig::make(gf, p, 1);
      const double w0 = 1e-10;
      double budget = admissible_budget(w0, cfg);
      ASSERT_GT(budget, 0.0);
      for (int i = 0; i <= 20; ++i) {
        double J = 0.9 * budget * i / 20;
        double a = bound_value(w0, J, cfg);
        double b = closed_form_bound(gf, w0, J, p, Adjust::ExactInverse, &cfg.consts);
        EXPECT_NEAR(b, a, 1e-6 * a) << gf.name() << " p=" << p << " J=" << J;
      }
      EXPECT_THROW(bound_value(w0, 1.01 * budget + 1e-9, cfg), RegimeError);
    }
}

TEST(Bound, IterlogExponentInUnitInterval) {
  for (int n : {1, 2}) {
    auto gf = GrowthFunction::iterlog(n);
    for (double J : {0.0, 0.1, 1.0, 5.0}) {
      double b = closed_form_bound(gf, 1e-12, J, 1.0);
      EXPECT_GT(b, 0.0);
      EXPECT_LE(b, 1.0);
    }
  }
  EXPECT_THROW(closed_form_bound(GrowthFunction::table({{1, 1}, {2, 1}}), 1e-8, 0.1, 1),
               std::invalid_argument);
}

TEST(Bound, BudgetGrowsAsInitialDistanceShrinks) {
  auto cfg = BoundConfig::make(GrowthFunction::bounded(), 1, 1);
  double prev = 0;
  for (double w0 : {1e-3, 1e-5, 1e-8, 1e-12, 1e-20}) {
    double b = admissible_budget(w0, cfg);
    EXPECT_GT(b, prev);
    prev = b;
  }
}

TEST(Osgood, ZeroForcingKeepsInitialValue) {
  auto gf = GrowthFunction::bounded();
  auto k = paper_constants(gf, 1, 1);
  auto rep = osgood_check(gf, 1, k, std::exp(-4.0), [](double) { return 0.0; }, {0.5, 1.0, 2.0});
  EXPECT_TRUE(rep.pass);
  EXPECT_FALSE(rep.blowup);
  for (double g : rep.G_ode) EXPECT_NEAR(g, std::exp(-4.0), 1e-15);
}

TEST(Osgood, BoundedUnitForcingHandSolution) {
  // u = -log G: u' = -sqrt(u), so sqrt(u) = 2 - t/2 while u >= 2
  auto gf = GrowthFunction::bounded();
  auto k = paper_constants(gf, 1, 1);
  std::vector<double> ts = {0.1, 0.25, 0.5, 1.0};
  auto rep = osgood_check(gf, 1, k, std::exp(-4.0), [](double) { return 1.0; }, ts,
                          [](double t) { return t; });
  EXPECT_TRUE(rep.pass) << rep.max_rel_err;
  ASSERT_EQ(rep.G_ode.size(), ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    double s = 2 - ts[i] / 2;
    EXPECT_NEAR(std::log(rep.G_ode[i]), -s * s, 1e-9);
  }
}

TEST(Osgood, DoublingForcingHalvesHorizon) {
  auto gf = GrowthFunction::orlicz(1);
  auto k = paper_constants(gf, 1, 1);
  std::vector<double> ts;
  for (int i = 1; i <= 400; ++i) ts.push_back(0.05 * i);
  auto one = osgood_check(gf, 1, k, 1e-6, [](double) { return 1.0; }, ts);
  auto two = osgood_check(gf, 1, k, 1e-6, [](double) { return 2.0; }, ts);
  ASSERT_TRUE(one.blowup);
  ASSERT_TRUE(two.blowup);
  EXPECT_NEAR(two.horizon, one.horizon / 2, 1e-9 * one.horizon);
  EXPECT_TRUE(one.pass);
  EXPECT_TRUE(two.pass);
}

TEST(Interpolation, ConstantAndHalfIndicator) {
  std::vector<double> c(100, 3.0);
  auto rc = interpolation_check(c, 2, 1, 4);
  EXPECT_TRUE(rc.pass);
  EXPECT_NEAR(rc.lhs, rc.rhs, 1e-12);
  std::vector<double> h(1000, 0.0);
  for (int i = 0; i < 500; ++i) h[i] = 2.0;
  auto rh = interpolation_check(h, 2, 1, INFINITY);
  EXPECT_NEAR(rh.theta_b, 0.5, 1e-15);
  EXPECT_NEAR(rh.lhs, std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(rh.rhs, std::sqrt(2.0), 1e-12);
  EXPECT_THROW(interpolation_check(h, 1, 2, 3), std::domain_error);
}

TEST(Interpolation, RandomFunctions) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::exponential_distribution<double> ex(1.0);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> h(64);
    for (auto& x : h) x = std::pow(ex(rng), 3.0);
    double b = 1 + 3 * u(rng);
    double a = b + 3 * u(rng);
    double c = u(rng) < 0.2 ? INFINITY : a + 0.01 + 5 * u(rng);
    auto r = interpolation_check(h, a, b, c);
    EXPECT_TRUE(r.pass) << a << " " << b << " " << c;
    EXPECT_LE(r.lhs, r.rhs * (1 + 1e-12));
  }
}

TEST(Loeper, IdenticalFieldsGiveZero) {
  const int n = 64;
  PoissonSolver solver(1, n);
  std::vector<double> rho(n);
  for (int j = 0; j < n; ++j) rho[j] = 1.0 + 0.3 * std::cos(2 * M_PI * j / n);
  FieldState f;
  solver.solve(rho, -1, f);
  auto gf = GrowthFunction::bounded();
  auto k = paper_constants(gf, 2, 1);
  auto pr = loeper_lp_probe(f, f, 2, gf, k, solve_dp(0, 0, gf, 2, k));
  EXPECT_EQ(pr.lhs, 0.0);
}

TEST(Perturbations, ShiftFirstAxisOnly) {
  auto base = make_initial("uniform_perturbed", {{"vth", 0.1}}, 2, 16, 1);
  auto pv = apply_perturbation(base, {"velocity_shift", 1e-3});
  auto px = apply_perturbation(base, {"position_shift", 0.25});
  for (std::size_t i = 0; i < base.size(); ++i) {
    EXPECT_NEAR(pv.v[2 * i], base.v[2 * i] + 1e-3, 1e-15);
    EXPECT_EQ(pv.v[2 * i + 1], base.v[2 * i + 1]);
    EXPECT_NEAR(px.x[2 * i], std::fmod(base.x[2 * i] + 0.25, 1.0), 1e-15);
    EXPECT_EQ(px.x[2 * i + 1], base.x[2 * i + 1]);
  }
  EXPECT_EQ(apply_perturbation(base, {"none", 0.0}).x, base.x);
  EXPECT_THROW(Perturbation::from_json({{"kind", "sideways"}}), ConfigError);
}

namespace {

SimConfig small_sim(bool free) {
  SimConfig s;
  s.N = 64;
  s.grid_n = 16;
  s.dt = 1e-2;
  s.T = 1.0;
  s.output_every = 10;
  s.initial = {{"amplitude", 0.05}, {"vth", 0.2}};
  s.free_streaming = free;
  s.seed = 3;
  return s;
}

}  // namespace

TEST(Twin, ZeroPerturbationGivesZeroDistances) {
  auto cfg = BoundConfig::make(GrowthFunction::bounded(), 1, 1);
  auto rep = run_twin_experiment(cfg, small_sim(false), {"none", 0.0});
  ASSERT_EQ(rep.rows.size(), 11u);
  for (const auto& r : rep.rows) {
    EXPECT_EQ(r.Wpp_f, 0.0);
    EXPECT_EQ(r.Dp, 0.0);
    EXPECT_TRUE(r.control_ok);
  }
}

TEST(Twin, FreeStreamingTranslation) {
  // a velocity shift delta translates phase space by (delta t, delta)
  const double delta = 1e-3;
  auto cfg = BoundConfig::make(GrowthFunction::bounded(), 1, 1);
  auto rep = run_twin_experiment(cfg, small_sim(true), {"velocity_shift", delta});
  for (const auto& r : rep.rows) {
    EXPECT_NEAR(r.Wpp_f, delta * (1 + r.t), 1e-12) << r.t;
    EXPECT_NEAR(r.Wpp_rho, delta * r.t, 1e-12) << r.t;
    EXPECT_NEAR(r.Cx, delta * r.t, 1e-12);
    EXPECT_NEAR(r.Cv, delta, 1e-15);
    EXPECT_TRUE(r.control_ok);
  }
  EXPECT_TRUE(rep.control_ok());
}

TEST(Twin, InteractingRunControlAndCsv) {
  auto cfg = BoundConfig::make(GrowthFunction::orlicz(1), 2, 1);
  auto rep = run_twin_experiment(cfg, small_sim(false), {"position_shift", 1e-4});
  EXPECT_TRUE(rep.control_ok());
  EXPECT_NEAR(rep.W0pp_exact, 1e-8, 1e-14);
  for (std::size_t i = 1; i < rep.rows.size(); ++i)
    EXPECT_GE(rep.rows[i].Jint, rep.rows[i - 1].Jint);
  for (const auto& r : rep.rows)
    if (r.admissible) EXPECT_GE(r.bound, r.Wpp_f);
  auto csv = rep.to_csv();
  EXPECT_EQ(csv.rfind("# config_hash=", 0), 0u);
  EXPECT_NE(csv.find("t,Wpp_f,Wpp_rho,Cx,Cv,Dp,lambda"), std::string::npos);
  EXPECT_EQ(rep.column("t").size(), rep.rows.size());
  // identical reruns
  EXPECT_EQ(run_twin_experiment(cfg, small_sim(false), {"position_shift", 1e-4}).to_csv(), csv);
}

TEST(VelocityBound, HoldsUnderUniformField) {
  auto e = make_initial("uniform_perturbed", {{"amplitude", 0.1}, {"vth", 0.2}}, 2, 256, 5);
  Simulation sim(e, 16);
  auto B = MagneticField::uniform({0, 0, 2.0});
  auto tr = run_velocity_bound(sim, B, 1e-3, 500, 50);
  EXPECT_TRUE(tr.holds);
  EXPECT_EQ(tr.t.size(), 11u);
  for (double x : tr.max_excess) EXPECT_LE(x, 1e-12);
}
