#pragma once

#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace kinwass {

enum class Family { Bounded, Orlicz, IterLog, Table };

/// Growth function Theta on [1, inf).
///
/// Named families are evaluated exactly as defined (IterLog(n) is constant
/// below exp_n(1), so its value at 1 is not 1). Tables are rescaled so that
/// Theta(1) = 1.
class GrowthFunction {
 public:
  static GrowthFunction bounded();
  static GrowthFunction orlicz(double alpha);
  static GrowthFunction iterlog(int n);
  static GrowthFunction table(std::vector<std::pair<double, double>> pts);

  static GrowthFunction from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  double operator()(double r) const;
  // Same as operator() without the r >= 1 precondition (clamps to 1).
  double eval_clamped(double r) const;

  Family family() const { return family_; }
  double alpha() const { return alpha_; }
  int n() const { return n_; }
  const std::vector<std::pair<double, double>>& points() const { return table_; }
  std::string name() const;

  // Abscissae where Theta is not smooth (table knots, iterlog threshold).
  std::vector<double> kinks() const;

 private:
  Family family_ = Family::Bounded;
  double alpha_ = 0.0;
  int n_ = 0;
  double iter_threshold_ = 1.0;
  std::vector<std::pair<double, double>> table_;  // (log r, value), normalized
};

// exp_n(1) with exp_0(1) = 1.
double iterated_exp(int n);
// log_0(x) = x, log_1(x) = |log x|, log_i = log applied i-1 more times.
double iterated_log(int i, double x);

struct GrowthConstants {
  double c_small = 0.0;  // regime threshold c_{p,Theta;d}
  double C_log = 0.0;    // C_{p,Theta}
  double C_bar = 0.0;    // Cbar_{p,Theta}
  double C_phi = 0.0;    // C_{p,phi_Theta;d}
  int d = 1;
};

// Closed-form constants for the three named families.
GrowthConstants paper_constants(const GrowthFunction& gf, double p, int d);
// C_phi = max{phi_Theta(s) : s >= c^{1/p}} / c^{1/p}.
double compute_C_phi(const GrowthFunction& gf, double p, int d, double c_small);
// Constants for a user table: c, C_log and C_bar supplied, C_phi derived.
GrowthConstants make_constants(const GrowthFunction& gf, double p, int d, double c_small,
                               double C_log, double C_bar);

double theta(const GrowthFunction& gf, double r);
double phi_theta(const GrowthFunction& gf, int d, double s);
double phi_p_theta(const GrowthFunction& gf, double p, const GrowthConstants& k, double s);
double lambda_of(const GrowthFunction& gf, double p, const GrowthConstants& k, double s);
// lambda as a function of L = -log s.
double lambda_of_log(const GrowthFunction& gf, double p, const GrowthConstants& k, double L);

// Psi(r) = int_r^c ds / sqrt(s phi_Theta(s)).
double psi(const GrowthFunction& gf, double p, const GrowthConstants& k, double r);
// Psi expressed through L = -log r, valid for L >= -log c (no underflow).
double psi_log(const GrowthFunction& gf, double p, const GrowthConstants& k, double L);
// Derivative of psi_log with respect to L.
double psi_log_density(const GrowthFunction& gf, const GrowthConstants& k, double L);
double psi_inv(const GrowthFunction& gf, double p, const GrowthConstants& k, double y);
// Returns L = -log Psi^{-1}(y); +inf when the inverse underflows every double.
double psi_inv_log(const GrowthFunction& gf, double p, const GrowthConstants& k, double y);

// Forward map s -> s / lambda(s).
double phi_forward(const GrowthFunction& gf, double p, const GrowthConstants& k, double s);
// Largest w such that Phi^{-1} is defined on (0, w]; scanned on a log grid.
double phi_window(const GrowthFunction& gf, double p, const GrowthConstants& k);
double phi_inv(const GrowthFunction& gf, double p, const GrowthConstants& k, double w);
// Same with log w in and L = -log s out.
double phi_inv_log(const GrowthFunction& gf, double p, const GrowthConstants& k, double log_w);

struct CheckResult {
  bool pass = true;
  double worst_margin = 0.0;  // relative; negative means violated
  double worst_at = 0.0;      // s where the worst margin occurs
};

struct AssumptionReport {
  CheckResult log_domination;     // |log(s/lambda)| <= C_log |log s|
  CheckResult theta_domination;   // Theta(|log(s/lambda)|) <= C_bar Theta(|log s|)
  CheckResult monotone_concave;   // phi_{p,Theta}
  CheckResult continuity;         // phi_Theta at e^{-d-1}
  bool all_pass() const {
    return log_domination.pass && theta_domination.pass && monotone_concave.pass &&
           continuity.pass;
  }
  nlohmann::json to_json() const;
};

AssumptionReport verify_assumptions(const GrowthFunction& gf, double p, int d,
                                    const GrowthConstants& k, int n_grid = 10000);

}  // namespace kinwass
