#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kinwass/config.hpp"
#include "kinwass/growth.hpp"
#include "kinwass/kinetic_distance.hpp"
#include "kinwass/transport.hpp"
#include "kinwass/vlasov.hpp"

namespace kinwass {

struct BoundConfig {
  double p = 1.0;
  GrowthFunction gf;
  GrowthConstants consts;
  int d = 1;
  int sigma = -1;
  double C_d = 1.0;
  double C_HW_max = 1.0;
  // magnetized case
  std::optional<GrowthFunction> gf_bar;
  double B_sup = 0.0;
  double C_B = 0.0;

  // Paper constants for the named families.
  static BoundConfig make(const GrowthFunction& gf, double p, int d);
  // {p, growth, d, C_d, C_HW_max, constants?, gf_bar?, C_B?, B_sup?}
  static BoundConfig from_json(const nlohmann::json& j, int d);
  nlohmann::json to_json() const;
  void validate() const;
};

struct AValue {
  double value = 0.0;
  bool floored = false;  // a norm below 1 was raised to 1
};

AValue A_of_t(double norm1, double norm2, double p);
// (1 + M) M^{1/p'} with M the larger norm; used by the L^p estimate.
double A_tilde(double norm1, double norm2, double p);

// 2 (1/p + C_phi) C_log C_bar
double C_total(const BoundConfig& cfg);
// 2 e^{1/p'} C_d C_HW_max
double max_C_U(const BoundConfig& cfg);
double J_of_t(const BoundConfig& cfg, double A);

// Cbar (e^{-1/p'} C_B C_total + e B_sup)
double C_B_tilde(const BoundConfig& cfg);
double vpb_J_tilde(const BoundConfig& cfg, double A, double t, double moment_norm,
                   double rho2_norm_integral);
// int_0^t g(s) e^{(t - s) B} ds by the trapezoid rule, for every t in times.
std::vector<double> exp_weighted_integral(const std::vector<double>& times,
                                          const std::vector<double>& g, double B);

// Psi^{-1}(Psi(Phi^{-1}(W0pp)) - Jint). Throws RegimeError when Phi^{-1} is
// undefined at W0pp or when Jint exceeds Psi(Phi^{-1}(W0pp)).
double bound_value(double W0pp, double Jint, const BoundConfig& cfg);
// Largest Jint for which the bound is defined.
double admissible_budget(double W0pp, const BoundConfig& cfg);
std::function<double(double)> bound_curve(double W0pp, std::function<double(double)> Jint,
                                          const BoundConfig& cfg);

enum class Adjust { Paper, ExactInverse };

// Displayed specializations: orlicz(alpha > 1), orlicz(1), bounded (beta -> 1) and
// iterlog(n). Adjust::Paper uses W0pp lambda(W0pp) as the adjusted initial value,
// ExactInverse uses Phi^{-1}(W0pp).
double closed_form_bound(const GrowthFunction& gf, double W0pp, double Jint, double p,
                         Adjust adjust = Adjust::Paper,
                         const GrowthConstants* k = nullptr);

struct OsgoodReport {
  bool pass = true;
  bool blowup = false;  // int H reached Psi(G0) inside the sample range
  double horizon = 0.0;  // time where int H = Psi(G0), inf if not reached
  double max_rel_err = 0.0;
  std::vector<double> t, G_ode, G_psi;
  nlohmann::json to_json() const;
};

// Integrates G' = H sqrt(G phi_Theta(G)) and compares with Psi^{-1}(Psi(G0) - int H).
// Hint may be empty, in which case int H is computed by quadrature.
OsgoodReport osgood_check(const GrowthFunction& gf, double p, const GrowthConstants& k, double G0,
                          const std::function<double(double)>& H,
                          const std::vector<double>& samples,
                          const std::function<double(double)>& Hint = {}, double tol = 1e-6);

struct LoeperProbe {
  bool skipped = false;
  std::string reason;
  double lhs = 0.0;         // ||grad U_1 - grad U_2||_{L^p}
  double rhs_factor = 0.0;  // Atilde (D/lambda)^{1/p} Theta^{1/p'}(|log D/lambda|)
  double scale = 0.0;       // (D/lambda)^{1/p} Theta^{1/p'}(|log D/lambda|)
  double A_tilde = 0.0;
  double ratio = 0.0;       // empirical C_U
  nlohmann::json to_json() const;
};

LoeperProbe loeper_lp_probe(const FieldState& f1, const FieldState& f2, double p,
                            const GrowthFunction& gf, const GrowthConstants& k,
                            const KineticValue& kv,
                            const std::vector<double>& r_grid = default_r_grid());

struct InterpolationReport {
  bool pass = true;
  double lhs = 0.0, rhs = 0.0;
  double theta_b = 0.0, theta_c = 0.0;  // exponents on ||h||_b and ||h||_c
  double printed_rhs = 0.0;             // with the exponents swapped
  nlohmann::json to_json() const;
};

// ||h||_a <= ||h||_b^theta ||h||_c^{1 - theta}, 1/a = theta/b + (1 - theta)/c.
InterpolationReport interpolation_check(const std::vector<double>& h, double a, double b,
                                        double c);

struct Perturbation {
  std::string kind = "velocity_shift";  // velocity_shift | position_shift | none
  double delta = 1e-3;
  static Perturbation from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

ParticleEnsemble apply_perturbation(const ParticleEnsemble& base, const Perturbation& pert);

struct StabilityRow {
  double t = 0.0;
  double Wpp_f = 0.0, Wpp_rho = 0.0;
  double Cx = 0.0, Cv = 0.0, Dp = 0.0, lambda = 1.0;
  bool in_regime = true;
  double Y1 = 0.0, Y2 = 0.0, A = 0.0, J = 0.0, Jint = 0.0;
  double bound = 0.0, bound_fitted = 0.0;
  bool admissible = false;
  bool approximate = false;
  double gap = 0.0;
  double margin_f = 0.0, margin_rho = 0.0;
  bool control_ok = true;
  double vbound_excess = 0.0;  // magnetized runs: max |V| - velocity bound
};

struct TwinOptions {
  std::size_t exact_cap = 4096;  // above this Sinkhorn is used for W_p(f1, f2)
  int threads = 1;
  std::vector<double> r_grid = default_r_grid();
};

struct StabilityReport {
  std::vector<StabilityRow> rows;
  nlohmann::json metadata;
  double W0pp_exact = 0.0;
  double W0pp_diag = 0.0;
  double kappa = 1.0;  // fitted constant multiplier of the bound
  bool magnetized = false;
  bool velocity_bound_ok = true;

  bool control_ok() const;
  std::string to_csv() const;
  std::vector<double> column(const std::string& name) const;
};

StabilityReport run_twin_experiment(const BoundConfig& cfg, const SimConfig& sim,
                                    const Perturbation& pert, const TwinOptions& opt = {});

// Run-time record of the velocity lemma for a magnetized run.
struct VelocityBoundTrace {
  std::vector<double> t;
  std::vector<double> max_excess;  // max over particles of |V| - bound, per output time
  bool holds = true;
};

// Steps a magnetized simulation, checking |V_i(t)| <= |v_i| e^{tB} + int E e^{(t-s)B}
// at every output time. Sim is advanced in place; on_output sees it at each output time.
VelocityBoundTrace run_velocity_bound(Simulation& sim, const MagneticField& B, double dt,
                                      int steps, int output_every,
                                      const std::function<void(const Simulation&)>& on_output = {});

}  // namespace kinwass
