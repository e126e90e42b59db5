#pragma once

#include <functional>
#include <limits>
#include <vector>

#include <nlohmann/json.hpp>

#include "kinwass/growth.hpp"
#include "kinwass/transport.hpp"

namespace kinwass {

struct KineticValue {
  double s = 0.0;       // D_p
  double lambda = 1.0;  // lambda(s)
  double Cx = 0.0;
  double Cv = 0.0;
  bool in_regime = true;     // s < c_small
  bool upper_bound = false;  // evaluated along a fixed plan rather than minimized
  double residual = 0.0;     // |s - lambda Cx - Cv|
};

using LambdaFn = std::function<double(double)>;

// Root of s - lambda(s) Cx = Cv for a positive nonincreasing lambda.
// Throws WellPosednessError when lambda is seen increasing on the bracket.
KineticValue solve_dp(double Cx, double Cv, const LambdaFn& lambda,
                      double c_small = std::numeric_limits<double>::infinity());

// lambda(s) = (|log s| Theta(|log s|))^{p/2}, frozen for s >= c_small.
LambdaFn paper_lambda(const GrowthFunction& gf, double p, const GrowthConstants& k);
KineticValue solve_dp(double Cx, double Cv, const GrowthFunction& gf, double p,
                      const GrowthConstants& k);

// D_p(t) along the pushforward of plan0.
KineticValue dp_of_t(const TransportPlan& plan0, const EmpiricalMeasure& mu0,
                     const EmpiricalMeasure& nu0, const Flow& flow1, const Flow& flow2, double t,
                     double p, const GrowthFunction& gf, const GrowthConstants& k);
// Same with the time-t states already at hand (indices as in plan0).
KineticValue dp_of_t(const TransportPlan& plan0, const EmpiricalMeasure& f1_t,
                     const EmpiricalMeasure& f2_t, double p, const GrowthFunction& gf,
                     const GrowthConstants& k);

struct ControlReport {
  bool f_pass = true;
  bool rho_pass = true;
  double margin_f = 0.0;    // D_p + tol - W_p^p(f1, f2)
  double margin_rho = 0.0;  // D_p / lambda + tol - W_p^p(rho1, rho2)
  bool pass() const { return f_pass && rho_pass; }
  nlohmann::json to_json() const;
};

// tol is the OT tolerance (0 for exact solvers, the certified gap for Sinkhorn);
// a relative 1e-12 allowance for the D_p residual is added on top.
ControlReport control_inequalities(const KineticValue& kv, double wpp_rho, double wpp_f,
                                   double tol = 0.0);

struct KineticUpper {
  KineticValue along_wp_plan;  // flagged upper_bound
  bool has_exact = false;
  KineticValue exact;  // min over permutations, N <= 6 equal weights only
  std::vector<std::size_t> best_perm;
};

KineticUpper kinetic_wasserstein_upper(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                                       double p, const GrowthFunction& gf,
                                       const GrowthConstants& k, const ExactOptions& opt = {});

}  // namespace kinwass
