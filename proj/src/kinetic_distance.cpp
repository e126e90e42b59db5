#include "kinwass/kinetic_distance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "kinwass/errors.hpp"

namespace kinwass {

KineticValue solve_dp(double Cx, double Cv, const LambdaFn& lambda, double c_small) {
  if (!(Cx >= 0.0) || !(Cv >= 0.0) || !std::isfinite(Cx) || !std::isfinite(Cv))
    throw std::domain_error("solve_dp: Cx and Cv must be finite and >= 0");
  KineticValue kv;
  kv.Cx = Cx;
  kv.Cv = Cv;
  if (Cx == 0.0 && Cv == 0.0) {
    kv.s = 0.0;
    kv.lambda = std::isfinite(c_small) ? lambda(c_small) : lambda(1.0);
    kv.in_regime = true;
    return kv;
  }
  auto g = [&](double s, double lam) { return s - lam * Cx - Cv; };

  double lo = Cv;
  if (Cv == 0.0) {
    lo = Cx;
    for (int i = 0; i < 2200 && g(lo, lambda(lo)) > 0.0; ++i) lo *= 0.5;
    if (g(lo, lambda(lo)) > 0.0) throw WellPosednessError("solve_dp: no lower bracket found");
  }
  const double lam_lo = lambda(lo);
  if (!(lam_lo > 0.0) || !std::isfinite(lam_lo))
    throw WellPosednessError("solve_dp: lambda must be positive and finite on the bracket");
  // g(lo) <= 0 gives lo <= Cv + lambda(lo) Cx, and lambda nonincreasing gives g(hi) >= 0
  double hi = std::max(lo, Cv + lam_lo * Cx);

  // lambda must not increase between lo and hi
  {
    double prev = lam_lo;
    const int m = 16;
    for (int i = 1; i <= m; ++i) {
      double s = lo * std::pow(hi / lo, static_cast<double>(i) / m);
      double l = lambda(s);
      if (!(l > 0.0)) throw WellPosednessError("solve_dp: lambda must be positive");
      if (l > prev * (1.0 + 1e-12))
        throw WellPosednessError("solve_dp: lambda increases on the bracket; D_p is not small enough");
      prev = l;
    }
  }
  const double lam_hi = lambda(hi);
  if (lam_hi == lam_lo && hi > lo) {
    // lambda is constant on the bracket, so hi is the root
    kv.s = hi;
    kv.lambda = lam_hi;
    kv.residual = std::abs(g(hi, lam_hi));
    kv.in_regime = kv.s < c_small;
    return kv;
  }
  double glo = g(lo, lam_lo), ghi = g(hi, lam_hi);
  // g(hi) >= 0 in exact arithmetic; recover from rounding by a few ulps
  for (int i = 0; i < 8 && ghi < 0.0; ++i) {
    hi *= 1.0 + 4.0 * std::numeric_limits<double>::epsilon();
    ghi = g(hi, lambda(hi));
  }
  if (glo > 0.0 || ghi < 0.0) throw WellPosednessError("solve_dp: no sign change on the bracket");

  if (glo == 0.0) {
    hi = lo;
  } else {
    while (true) {
      double mid = lo > 0.0 ? std::sqrt(lo) * std::sqrt(hi) : 0.5 * (lo + hi);
      if (!(mid > lo && mid < hi)) mid = 0.5 * (lo + hi);
      if (!(mid > lo && mid < hi)) break;
      double gm = g(mid, lambda(mid));
      if (gm == 0.0) {
        lo = hi = mid;
        break;
      }
      if (gm < 0.0)
        lo = mid;
      else
        hi = mid;
    }
  }
  double llo = lambda(lo), lhi = lambda(hi);
  double rlo = std::abs(g(lo, llo)), rhi = std::abs(g(hi, lhi));
  if (rlo <= rhi) {
    kv.s = lo;
    kv.lambda = llo;
    kv.residual = rlo;
  } else {
    kv.s = hi;
    kv.lambda = lhi;
    kv.residual = rhi;
  }
  kv.in_regime = kv.s < c_small;
  return kv;
}

LambdaFn paper_lambda(const GrowthFunction& gf, double p, const GrowthConstants& k) {
  return [gf, p, k](double s) { return lambda_of(gf, p, k, s); };
}

KineticValue solve_dp(double Cx, double Cv, const GrowthFunction& gf, double p,
                      const GrowthConstants& k) {
  return solve_dp(Cx, Cv, paper_lambda(gf, p, k), k.c_small);
}

KineticValue dp_of_t(const TransportPlan& plan0, const EmpiricalMeasure& mu0,
                     const EmpiricalMeasure& nu0, const Flow& flow1, const Flow& flow2, double t,
                     double p, const GrowthFunction& gf, const GrowthConstants& k) {
  PhaseCost c = pushforward_costs(plan0, mu0, nu0, flow1, flow2, t, p);
  return solve_dp(c.pos, c.vel, gf, p, k);
}

KineticValue dp_of_t(const TransportPlan& plan0, const EmpiricalMeasure& f1_t,
                     const EmpiricalMeasure& f2_t, double p, const GrowthFunction& gf,
                     const GrowthConstants& k) {
  PhaseCost c = pushforward_costs(plan0, f1_t, f2_t, p);
  return solve_dp(c.pos, c.vel, gf, p, k);
}

nlohmann::json ControlReport::to_json() const {
  return {{"f_pass", f_pass},
          {"rho_pass", rho_pass},
          {"margin_f", margin_f},
          {"margin_rho", margin_rho}};
}

ControlReport control_inequalities(const KineticValue& kv, double wpp_rho, double wpp_f,
                                   double tol) {
  ControlReport r;
  const double slack = tol + 1e-12 * kv.s;
  r.margin_f = kv.s + slack - wpp_f;
  r.margin_rho = kv.s / kv.lambda + slack - wpp_rho;
  r.f_pass = r.margin_f >= 0.0;
  r.rho_pass = r.margin_rho >= 0.0;
  return r;
}

KineticUpper kinetic_wasserstein_upper(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                                       double p, const GrowthFunction& gf,
                                       const GrowthConstants& k, const ExactOptions& opt) {
  KineticUpper out;
  OTResult ot = wasserstein_p(mu, nu, p, opt);
  out.along_wp_plan = solve_dp(ot.plan.cost_pos, ot.plan.cost_vel, gf, p, k);
  out.along_wp_plan.upper_bound = true;

  const std::size_t n = mu.size();
  if (n <= 6 && n == nu.size() && mu.equal_weights() && nu.equal_weights()) {
    // D_p(pi) <= t iff lambda(t) Cx + Cv <= t, which is linear in pi, so the
    // minimum over couplings sits at a vertex of the Birkhoff polytope.
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    const double w = 1.0 / static_cast<double>(n);
    bool first = true;
    do {
      double cx = 0.0, cv = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        PhaseCost c = phase_cost(mu.xi(i), mu.vi(i), nu.xi(perm[i]), nu.vi(perm[i]), mu.d, p,
                                 mu.domain);
        cx += w * c.pos;
        cv += w * c.vel;
      }
      KineticValue kv = solve_dp(cx, cv, gf, p, k);
      if (first || kv.s < out.exact.s) {
        out.exact = kv;
        out.best_perm = perm;
        first = false;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
    out.has_exact = true;
  }
  return out;
}

}  // namespace kinwass
