#include "kinwass/stability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/numeric/odeint.hpp>

#include "kinwass/errors.hpp"
#include "kinwass/numeric.hpp"

namespace kinwass {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

double inv_conj(double p) { return 1.0 - 1.0 / p; }  // 1/p'

// Config in which the magnetized bound is stated: Theta replaced by Thetatilde and
// the regime shrunk to the smaller of the two thresholds.
BoundConfig tilde_of(const BoundConfig& cfg) {
  if (!cfg.gf_bar) return cfg;
  BoundConfig t = cfg;
  t.gf = *cfg.gf_bar;
  t.gf_bar.reset();
  GrowthConstants kb = paper_constants(t.gf, cfg.p, cfg.d);
  if (cfg.consts.c_small < kb.c_small)
    kb = make_constants(t.gf, cfg.p, cfg.d, cfg.consts.c_small, kb.C_log, kb.C_bar);
  t.consts = kb;
  return t;
}

nlohmann::json constants_json(const GrowthConstants& k) {
  return {{"c_small", k.c_small}, {"C_log", k.C_log}, {"C_bar", k.C_bar}, {"C_phi", k.C_phi}};
}

}  // namespace

// ---------------------------------------------------------------------------
// configuration

BoundConfig BoundConfig::make(const GrowthFunction& gf, double p, int d) {
  BoundConfig c;
  c.p = p;
  c.gf = gf;
  c.d = d;
  c.consts = paper_constants(gf, p, d);
  return c;
}

BoundConfig BoundConfig::from_json(const nlohmann::json& j, int d) {
  if (!j.is_object()) throw ConfigError("bound config must be a table");
  static const char* known[] = {"p",         "growth", "C_d", "C_HW_max", "constants",
                                "growth_bar", "C_B",   "B_sup"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw ConfigError("unknown bound key '" + it.key() + "'");
  }
  BoundConfig c;
  c.p = get_number(j, "p", 1.0);
  c.d = d;
  try {
    c.gf = j.contains("growth") ? GrowthFunction::from_json(j.at("growth"))
                                : GrowthFunction::bounded();
    if (j.contains("constants")) {
      const auto& k = j.at("constants");
      c.consts = make_constants(c.gf, c.p, d, get_number(k, "c_small", 0.0),
                                get_number(k, "C_log", 0.0), get_number(k, "C_bar", 0.0));
    } else {
      c.consts = paper_constants(c.gf, c.p, d);
    }
    if (j.contains("growth_bar")) c.gf_bar = GrowthFunction::from_json(j.at("growth_bar"));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("bound config: ") + e.what());
  }
  c.C_d = get_number(j, "C_d", c.C_d);
  c.C_HW_max = get_number(j, "C_HW_max", c.C_HW_max);
  c.C_B = get_number(j, "C_B", c.C_B);
  c.B_sup = get_number(j, "B_sup", c.B_sup);
  try {
    c.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return c;
}

nlohmann::json BoundConfig::to_json() const {
  nlohmann::json j{{"p", p},       {"growth", gf.to_json()}, {"d", d},
                   {"sigma", sigma}, {"C_d", C_d},           {"C_HW_max", C_HW_max},
                   {"constants", constants_json(consts)}};
  if (gf_bar) {
    j["growth_bar"] = gf_bar->to_json();
    j["C_B"] = C_B;
    j["B_sup"] = B_sup;
  }
  return j;
}

void BoundConfig::validate() const {
  if (!(p >= 1.0) || !std::isfinite(p)) throw std::domain_error("bound config: p must be >= 1");
  if (!(consts.c_small > 0.0) || !(consts.C_log > 0.0) || !(consts.C_bar > 0.0) ||
      !(consts.C_phi > 0.0))
    throw std::domain_error("bound config: growth constants must be positive");
  if (!(C_d > 0.0) || !(C_HW_max > 0.0))
    throw std::domain_error("bound config: C_d and C_HW_max must be positive");
  if (!(C_B >= 0.0) || !(B_sup >= 0.0))
    throw std::domain_error("bound config: magnetic constants must be >= 0");
}

// ---------------------------------------------------------------------------
// J and friends

AValue A_of_t(double norm1, double norm2, double p) {
  if (!(p >= 1.0)) throw std::domain_error("A_of_t: p must be >= 1");
  AValue a;
  if (norm1 < 1.0 || norm2 < 1.0) a.floored = true;
  norm1 = std::max(norm1, 1.0);
  norm2 = std::max(norm2, 1.0);
  double M = std::max(norm1, norm2);
  a.value = std::pow(M, 1.0 + inv_conj(p));
  if (p > 1.0) a.value *= std::pow(norm2, 1.0 / p);
  return a;
}

double A_tilde(double norm1, double norm2, double p) {
  double M = std::max(norm1, norm2);
  return (1.0 + M) * std::pow(M, inv_conj(p));
}

double C_total(const BoundConfig& cfg) {
  const auto& k = cfg.consts;
  return 2.0 * (1.0 / cfg.p + k.C_phi) * k.C_log * k.C_bar;
}

double max_C_U(const BoundConfig& cfg) {
  return 2.0 * std::exp(inv_conj(cfg.p)) * cfg.C_d * cfg.C_HW_max;
}

double J_of_t(const BoundConfig& cfg, double A) {
  cfg.validate();
  double factor = cfg.p == 1.0 ? 1.0 : std::exp(1.0 / cfg.p) * max_C_U(cfg);
  return cfg.p * (1.0 + C_total(cfg) * A * factor);
}

double C_B_tilde(const BoundConfig& cfg) {
  if (!cfg.gf_bar) throw std::invalid_argument("C_B_tilde: the moment growth function is missing");
  BoundConfig t = tilde_of(cfg);
  return t.consts.C_bar *
         (std::exp(-inv_conj(cfg.p)) * cfg.C_B * C_total(t) + std::numbers::e * cfg.B_sup);
}

double vpb_J_tilde(const BoundConfig& cfg, double A, double t, double moment_norm,
                   double rho2_norm_integral) {
  if (!cfg.gf_bar) throw std::invalid_argument("vpb_J_tilde: the moment growth function is missing");
  BoundConfig tc = tilde_of(cfg);
  return J_of_t(tc, A) + cfg.p * C_B_tilde(cfg) *
                             (std::exp(t * cfg.B_sup) * moment_norm + rho2_norm_integral);
}

std::vector<double> exp_weighted_integral(const std::vector<double>& times,
                                          const std::vector<double>& g, double B) {
  if (times.size() != g.size()) throw std::invalid_argument("exp_weighted_integral: size mismatch");
  std::vector<double> out(times.size(), 0.0);
  for (std::size_t i = 1; i < times.size(); ++i) {
    double h = times[i] - times[i - 1];
    double e = std::exp(h * B);
    out[i] = e * out[i - 1] + 0.5 * h * (g[i - 1] * e + g[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// bounds

double admissible_budget(double W0pp, const BoundConfig& cfg) {
  if (W0pp == 0.0) return kInf;
  if (!(W0pp > 0.0)) throw std::domain_error("initial distance must be >= 0");
  BoundConfig tc = tilde_of(cfg);
  double L0 = phi_inv_log(tc.gf, tc.p, tc.consts, std::log(W0pp));
  return psi_log(tc.gf, tc.p, tc.consts, L0);
}

double bound_value(double W0pp, double Jint, const BoundConfig& cfg) {
  if (!(Jint >= 0.0)) throw std::domain_error("bound: the J integral must be >= 0");
  if (W0pp == 0.0) return 0.0;
  double budget = admissible_budget(W0pp, cfg);
  if (Jint > budget * (1.0 + 1e-14))
    throw RegimeError("bound: int J = " + format_double(Jint) +
                      " exceeds Psi(Phi^{-1}(W0)) = " + format_double(budget));
  BoundConfig tc = tilde_of(cfg);
  double L = psi_inv_log(tc.gf, tc.p, tc.consts, std::max(0.0, budget - Jint));
  return std::exp(-L);
}

std::function<double(double)> bound_curve(double W0pp, std::function<double(double)> Jint,
                                          const BoundConfig& cfg) {
  return [W0pp, Jint = std::move(Jint), cfg](double t) { return bound_value(W0pp, Jint(t), cfg); };
}

double closed_form_bound(const GrowthFunction& gf, double W0pp, double Jint, double p,
                         Adjust adjust, const GrowthConstants* k) {
  if (!(W0pp > 0.0) || !(W0pp < 1.0)) throw std::domain_error("closed form: W0pp must lie in (0, 1)");
  if (!(Jint >= 0.0)) throw std::domain_error("closed form: the J integral must be >= 0");
  double L0 = 0.0;
  if (adjust == Adjust::ExactInverse) {
    if (!k) throw std::invalid_argument("closed form: the exact inverse needs growth constants");
    L0 = phi_inv_log(gf, p, *k, std::log(W0pp));
  } else {
    double Lw = -std::log(W0pp);
    L0 = Lw - 0.5 * p * std::log(Lw * gf.eval_clamped(Lw));
    if (!(L0 > 0.0)) throw RegimeError("closed form: adjusted initial value is not below 1");
  }
  switch (gf.family()) {
    case Family::Bounded: {
      double r = std::sqrt(L0) - 0.5 * Jint;
      if (!(r > 0.0)) throw RegimeError("closed form: J integral beyond the bounded-family horizon");
      return std::exp(-r * r);
    }
    case Family::Orlicz: {
      if (gf.alpha() == 1.0) return std::exp(-L0 * std::exp(-Jint));
      double beta = 1.0 + 1.0 / gf.alpha();
      double g = 0.5 * (2.0 - beta);
      double r = std::pow(L0, g) - g * Jint;
      if (!(r > 0.0)) throw RegimeError("closed form: J integral beyond the Orlicz horizon");
      return std::exp(-std::pow(r, 1.0 / g));
    }
    case Family::IterLog: {
      // exp_{n+1}(-J) / exp_{n+1}(0), so the exponent is 1 at J = 0
      double e = -Jint, e0 = 0.0;
      for (int i = 0; i <= gf.n(); ++i) {
        e = std::exp(e);
        e0 = std::exp(e0);
      }
      return std::exp(-L0 * (e / e0));
    }
    case Family::Table:
      break;
  }
  throw std::invalid_argument("closed form: no displayed formula for tabulated growth");
}

// ---------------------------------------------------------------------------
// Osgood

nlohmann::json OsgoodReport::to_json() const {
  return {{"pass", pass},       {"blowup", blowup}, {"horizon", horizon},
          {"max_rel_err", max_rel_err}, {"t", t},    {"G_ode", G_ode},
          {"G_psi", G_psi}};
}

OsgoodReport osgood_check(const GrowthFunction& gf, double p, const GrowthConstants& k, double G0,
                          const std::function<double(double)>& H,
                          const std::vector<double>& samples,
                          const std::function<double(double)>& Hint, double tol) {
  using boost::math::quadrature::gauss_kronrod;
  if (!(G0 > 0.0) || G0 > k.c_small * (1.0 + 1e-15))
    throw RegimeError("osgood: G0 must lie in (0, c_small]");
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (!(samples[i] >= 0.0) || (i > 0 && !(samples[i] > samples[i - 1])))
      throw std::invalid_argument("osgood: samples must be increasing and >= 0");

  auto integral = [&](double t) {
    if (Hint) return Hint(t);
    if (t == 0.0) return 0.0;
    return gauss_kronrod<double, 31>::integrate(H, 0.0, t, 15, 1e-14);
  };

  OsgoodReport rep;
  const double L0 = -std::log(G0);
  const double y0 = psi_log(gf, p, k, L0);
  rep.horizon = kInf;
  if (!samples.empty() && integral(samples.back()) >= y0) {
    rep.blowup = true;
    double lo = 0.0, hi = samples.back();
    for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
      double mid = 0.5 * (lo + hi);
      (integral(mid) >= y0 ? hi : lo) = mid;
    }
    rep.horizon = hi;
  }

  const double b = k.d + 1.0;
  const double K = std::exp(-b) * b * gf(b);
  // u = -log G, u' = -H sqrt(G phi_Theta(G)) / G
  auto rate = [&](double u) {
    if (u >= b) return std::sqrt(u * gf(u));
    return std::sqrt(K * std::exp(u));
  };
  using State = std::array<double, 1>;
  auto sys = [&](const State& x, State& dx, double t) { dx[0] = -H(t) * rate(x[0]); };

  std::vector<double> times{0.0};
  for (double s : samples)
    if (s < rep.horizon && s > 0.0) times.push_back(s);
  std::vector<double> us;
  State x{L0};
  namespace ode = boost::numeric::odeint;
  if (times.size() > 1) {
    auto stepper = ode::make_dense_output(1e-13, 1e-13, ode::runge_kutta_dopri5<State>());
    double dt0 = std::min(1e-4, times[1]);
    ode::integrate_times(stepper, sys, x, times.begin(), times.end(), dt0,
                         [&](const State& s, double) { us.push_back(s[0]); });
  } else {
    us.push_back(L0);
  }
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (i == 0 && !samples.empty() && samples.front() > 0.0) continue;
    double t = times[i];
    double Lpsi = psi_inv_log(gf, p, k, std::max(0.0, y0 - integral(t)));
    double err = std::abs(std::expm1(-(us[i] - Lpsi)));
    rep.t.push_back(t);
    rep.G_ode.push_back(std::exp(-us[i]));
    rep.G_psi.push_back(std::exp(-Lpsi));
    rep.max_rel_err = std::max(rep.max_rel_err, err);
  }
  rep.pass = rep.max_rel_err <= tol;
  return rep;
}

// ---------------------------------------------------------------------------
// Proposition probe and interpolation

nlohmann::json LoeperProbe::to_json() const {
  return {{"skipped", skipped}, {"reason", reason},   {"lhs", lhs},   {"rhs_factor", rhs_factor},
          {"scale", scale},     {"A_tilde", A_tilde}, {"ratio", ratio}};
}

LoeperProbe loeper_lp_probe(const FieldState& f1, const FieldState& f2, double p,
                            const GrowthFunction& gf, const GrowthConstants& k,
                            const KineticValue& kv, const std::vector<double>& r_grid) {
  (void)k;
  LoeperProbe pr;
  if (f1.d != f2.d || f1.cells() != f2.cells() || f1.gradU.size() != f2.gradU.size())
    throw std::invalid_argument("loeper probe: snapshot grids differ");
  const std::size_t cells = f1.cells();
  std::vector<double> diff(cells);
  for (std::size_t i = 0; i < cells; ++i) {
    double s = 0.0;
    for (int a = 0; a < f1.d; ++a) {
      double e = f1.gradU[a * cells + i] - f2.gradU[a * cells + i];
      s += e * e;
    }
    diff[i] = std::sqrt(s);
  }
  pr.lhs = grid_lp_norm(diff, p);
  if (!(p > 1.0)) {
    pr.skipped = true;
    pr.reason = "p must be > 1";
    return pr;
  }
  if (kv.s == 0.0) {
    pr.skipped = pr.lhs != 0.0;
    pr.reason = pr.skipped ? "D_p is zero but the fields differ" : "";
    return pr;
  }
  double x = kv.s / kv.lambda;
  double lx = std::abs(std::log(x));
  if (!(lx > 1.0)) {
    pr.skipped = true;
    pr.reason = "|log(D_p / lambda)| <= 1";
    return pr;
  }
  double Y1 = yudovich_norm(f1.rho, gf, r_grid).value;
  double Y2 = yudovich_norm(f2.rho, gf, r_grid).value;
  pr.A_tilde = A_tilde(Y1, Y2, p);
  pr.scale = std::pow(x, 1.0 / p) * std::pow(gf(lx), inv_conj(p));
  pr.rhs_factor = pr.A_tilde * pr.scale;
  pr.ratio = pr.lhs / pr.rhs_factor;
  return pr;
}

nlohmann::json InterpolationReport::to_json() const {
  return {{"pass", pass},       {"lhs", lhs},         {"rhs", rhs},
          {"theta_b", theta_b}, {"theta_c", theta_c}, {"printed_rhs", printed_rhs}};
}

InterpolationReport interpolation_check(const std::vector<double>& h, double a, double b,
                                        double c) {
  if (!(1.0 <= b && b <= a && a < c))
    throw std::domain_error("interpolation: need 1 <= b <= a < c <= inf");
  auto inv = [](double x) { return std::isinf(x) ? 0.0 : 1.0 / x; };
  InterpolationReport r;
  double na = grid_lp_norm(h, a), nb = grid_lp_norm(h, b), nc = grid_lp_norm(h, c);
  r.theta_b = (inv(a) - inv(c)) / (inv(b) - inv(c));
  r.theta_c = 1.0 - r.theta_b;
  r.lhs = na;
  r.rhs = std::pow(nb, r.theta_b) * std::pow(nc, r.theta_c);
  double pb = (inv(b) - inv(c)) / (inv(a) - inv(c));
  double pc = (inv(a) - inv(b)) / (inv(a) - inv(c));
  r.printed_rhs = std::pow(nb, pb) * std::pow(nc, pc);
  r.pass = r.lhs <= r.rhs * (1.0 + 1e-12);
  return r;
}

// ---------------------------------------------------------------------------
// twin experiment

Perturbation Perturbation::from_json(const nlohmann::json& j) {
  Perturbation p;
  if (j.is_null()) return p;
  if (!j.is_object()) throw ConfigError("perturbation must be a table");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (it.key() != "kind" && it.key() != "delta")
      throw ConfigError("unknown perturbation key '" + it.key() + "'");
  p.kind = get_string(j, "kind", p.kind);
  p.delta = get_number(j, "delta", p.delta);
  if (p.kind != "velocity_shift" && p.kind != "position_shift" && p.kind != "none")
    throw ConfigError("unknown perturbation kind '" + p.kind + "'");
  if (!std::isfinite(p.delta)) throw ConfigError("perturbation.delta must be finite");
  return p;
}

nlohmann::json Perturbation::to_json() const { return {{"kind", kind}, {"delta", delta}}; }

ParticleEnsemble apply_perturbation(const ParticleEnsemble& base, const Perturbation& pert) {
  ParticleEnsemble e = base;
  const int d = e.d;
  if (pert.kind == "velocity_shift") {
    for (std::size_t i = 0; i < e.size(); ++i) e.v[i * d] += pert.delta;
  } else if (pert.kind == "position_shift") {
    for (std::size_t i = 0; i < e.size(); ++i) e.x[i * d] += pert.delta;
    e.wrap();
  } else if (pert.kind != "none") {
    throw std::invalid_argument("unknown perturbation kind '" + pert.kind + "'");
  }
  return e;
}

bool StabilityReport::control_ok() const {
  for (const auto& r : rows)
    if (r.in_regime && !r.control_ok) return false;
  return true;
}

namespace {

const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols{
      "t",   "Wpp_f", "Wpp_rho", "Cx",    "Cv",    "Dp",         "lambda",
      "in_regime", "Y1", "Y2",   "A",     "J",     "bound",      "bound_fitted",
      "admissible", "approximate", "gap", "Jint", "margin_f",   "margin_rho", "control_ok"};
  return cols;
}

double row_value(const StabilityRow& r, const std::string& c) {
  if (c == "t") return r.t;
  if (c == "Wpp_f") return r.Wpp_f;
  if (c == "Wpp_rho") return r.Wpp_rho;
  if (c == "Cx") return r.Cx;
  if (c == "Cv") return r.Cv;
  if (c == "Dp") return r.Dp;
  if (c == "lambda") return r.lambda;
  if (c == "in_regime") return r.in_regime;
  if (c == "Y1") return r.Y1;
  if (c == "Y2") return r.Y2;
  if (c == "A") return r.A;
  if (c == "J") return r.J;
  if (c == "bound") return r.bound;
  if (c == "bound_fitted") return r.bound_fitted;
  if (c == "admissible") return r.admissible;
  if (c == "approximate") return r.approximate;
  if (c == "gap") return r.gap;
  if (c == "Jint") return r.Jint;
  if (c == "margin_f") return r.margin_f;
  if (c == "margin_rho") return r.margin_rho;
  if (c == "control_ok") return r.control_ok;
  if (c == "vbound_excess") return r.vbound_excess;
  throw std::invalid_argument("unknown report column '" + c + "'");
}

bool is_flag(const std::string& c) {
  return c == "in_regime" || c == "admissible" || c == "approximate" || c == "control_ok";
}

}  // namespace

std::string StabilityReport::to_csv() const {
  std::ostringstream out;
  std::vector<std::string> cols = csv_columns();
  if (magnetized) cols.push_back("vbound_excess");
  if (metadata.contains("config_hash"))
    out << "# config_hash=" << metadata["config_hash"].get<std::string>()
        << " seed=" << metadata.value("seed", 0) << "\n";
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << "\n";
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < cols.size(); ++i) {
      double v = row_value(r, cols[i]);
      out << (i ? "," : "") << (is_flag(cols[i]) ? (v != 0.0 ? "1" : "0") : format_double(v));
    }
    out << "\n";
  }
  return out.str();
}

std::vector<double> StabilityReport::column(const std::string& name) const {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(row_value(r, name));
  return out;
}

namespace {

// Trapezoid bookkeeping of |v| e^{tB} + int ||E||_inf e^{(t - s) B} ds per particle.
class VelocityTracker {
 public:
  VelocityTracker(const ParticleEnsemble& e, double B) : B_(B), d_(e.d) {
    speed0_.resize(e.size());
    for (std::size_t i = 0; i < e.size(); ++i) speed0_[i] = speed(e, i);
  }
  void advance(double h, double E0, double E1) {
    double g = std::exp(h * B_);
    I_ = g * I_ + 0.5 * h * (E0 * g + E1);
    t_ += h;
  }
  // max over particles of (|V| - bound) / bound
  double excess(const ParticleEnsemble& e) const {
    double g = std::exp(t_ * B_), worst = -kInf;
    for (std::size_t i = 0; i < e.size(); ++i) {
      double b = speed0_[i] * g + I_;
      double s = speed(e, i);
      worst = std::max(worst, b > 0.0 ? (s - b) / b : (s > 0.0 ? kInf : 0.0));
    }
    return worst;
  }

 private:
  double speed(const ParticleEnsemble& e, std::size_t i) const {
    double s = 0.0;
    for (int a = 0; a < d_; ++a) s += e.v[i * d_ + a] * e.v[i * d_ + a];
    return std::sqrt(s);
  }
  double B_;
  int d_;
  double I_ = 0.0, t_ = 0.0;
  std::vector<double> speed0_;
};

constexpr double kVelocitySlack = 1e-12;

struct Snapshot {
  double t = 0.0;
  ParticleEnsemble e1, e2;
  std::vector<double> rho1, rho2;
  double vexcess = 0.0;
};

// Advances one copy of the dynamics; free streaming keeps the field frozen at zero.
class Evolver {
 public:
  Evolver(const ParticleEnsemble& e, const SimConfig& sim, const MagneticField* B)
      : free_(sim.free_streaming), grid_n_(sim.grid_n), B_(B) {
    if (free_)
      ens_ = e;
    else
      sim_ = std::make_unique<Simulation>(e, sim.grid_n, sim.c_cfl);
    if (B_) tracker_ = std::make_unique<VelocityTracker>(ensemble(), B_->sup_norm);
  }
  const ParticleEnsemble& ensemble() const { return free_ ? ens_ : sim_->ensemble(); }
  std::vector<double> rho() const {
    return free_ ? deposit(ens_, grid_n_) : sim_->field().rho;
  }
  void step(double dt) {
    if (free_) {
      for (std::size_t i = 0; i < ens_.x.size(); ++i) ens_.x[i] += dt * ens_.v[i];
      ens_.wrap();
      if (tracker_) tracker_->advance(dt, 0.0, 0.0);
      return;
    }
    double E0 = B_ ? max_force(sim_->field()) : 0.0;
    if (B_)
      sim_->step_vpb(*B_, dt);
    else
      sim_->step_vp(dt);
    if (tracker_) tracker_->advance(dt, E0, max_force(sim_->field()));
  }
  double vexcess() const { return tracker_ ? tracker_->excess(ensemble()) : 0.0; }

 private:
  bool free_;
  int grid_n_;
  const MagneticField* B_;
  ParticleEnsemble ens_;
  std::unique_ptr<Simulation> sim_;
  std::unique_ptr<VelocityTracker> tracker_;
};

struct OTPair {
  double cost = 0.0;
  double gap = 0.0;
  bool approximate = false;
};

OTPair transport_cost(const EmpiricalMeasure& a, const EmpiricalMeasure& b, double p,
                      std::size_t cap) {
  OTPair r;
  if (a.size() <= cap) {
    ExactOptions o;
    o.cap_equal = cap;
    r.cost = wasserstein_p(a, b, p, o).plan.cost();
  } else {
    OTResult s = sinkhorn_wp(a, b, p);
    r.cost = s.plan.cost();
    r.gap = s.plan.gap;
    r.approximate = true;
  }
  return r;
}

}  // namespace

StabilityReport run_twin_experiment(const BoundConfig& cfg_in, const SimConfig& sim,
                                    const Perturbation& pert, const TwinOptions& opt) {
  BoundConfig cfg = cfg_in;
  cfg.d = sim.d;
  cfg.sigma = sim.sigma;
  if (cfg.consts.d != sim.d)
    throw ConfigError("bound constants were computed for d = " + std::to_string(cfg.consts.d) +
                      " but the simulation has d = " + std::to_string(sim.d));
  cfg.validate();

  std::optional<MagneticField> B = sim.magnetic();
  const bool magnetized = B.has_value();
  if (magnetized) {
    if (!cfg.gf_bar) throw ConfigError("a magnetized twin run needs bounds.growth_bar");
    cfg.B_sup = B->sup_norm;
    cfg.C_B = B->loglip_const;
  }
  const BoundConfig dcfg = tilde_of(cfg);  // lambda and regime of the bound actually used

  ParticleEnsemble base = make_initial(sim.initial_kind, sim.initial, sim.d, sim.N, sim.seed,
                                       sim.sigma);
  ParticleEnsemble pert_ens = apply_perturbation(base, pert);

  // evolve, keeping snapshots at output times
  std::vector<Snapshot> snaps;
  {
    Evolver a(base, sim, magnetized ? &*B : nullptr);
    Evolver b(pert_ens, sim, magnetized ? &*B : nullptr);
    const int steps = sim.steps();
    for (int s = 0; s <= steps; ++s) {
      if (s > 0) {
        a.step(sim.dt);
        b.step(sim.dt);
      }
      if (s % sim.output_every == 0 || s == steps) {
        Snapshot sn;
        sn.t = s * sim.dt;
        sn.e1 = a.ensemble();
        sn.e2 = b.ensemble();
        sn.rho1 = a.rho();
        sn.rho2 = b.rho();
        sn.vexcess = std::max(a.vexcess(), b.vexcess());
        snaps.push_back(std::move(sn));
      }
    }
  }

  const EmpiricalMeasure mu0 = snaps.front().e1.measure();
  const EmpiricalMeasure nu0 = snaps.front().e2.measure();
  const TransportPlan plan0 = diagonal_plan(mu0, nu0, cfg.p);

  StabilityReport rep;
  rep.magnetized = magnetized;
  rep.rows.resize(snaps.size());
  std::vector<double> Y2_raw(snaps.size());
  parallel_for(snaps.size(), opt.threads, [&](std::size_t i) {
    const Snapshot& sn = snaps[i];
    StabilityRow& r = rep.rows[i];
    r.t = sn.t;
    EmpiricalMeasure mu = sn.e1.measure(), nu = sn.e2.measure();
    OTPair f = transport_cost(mu, nu, cfg.p, opt.exact_cap);
    OTPair rho = transport_cost(mu.positions_only(), nu.positions_only(), cfg.p, opt.exact_cap);
    r.Wpp_f = f.cost;
    r.Wpp_rho = rho.cost;
    r.approximate = f.approximate || rho.approximate;
    r.gap = std::max(f.gap, rho.gap);
    KineticValue kv = dp_of_t(plan0, mu, nu, cfg.p, dcfg.gf, dcfg.consts);
    r.Cx = kv.Cx;
    r.Cv = kv.Cv;
    r.Dp = kv.s;
    r.lambda = kv.lambda;
    r.in_regime = kv.in_regime;
    ControlReport c = control_inequalities(kv, r.Wpp_rho, r.Wpp_f, r.gap);
    r.margin_f = c.margin_f;
    r.margin_rho = c.margin_rho;
    r.control_ok = c.pass();
    r.Y1 = yudovich_norm(sn.rho1, cfg.gf, opt.r_grid).value;
    r.Y2 = yudovich_norm(sn.rho2, cfg.gf, opt.r_grid).value;
    r.A = A_of_t(r.Y1, r.Y2, cfg.p).value;
    r.vbound_excess = sn.vexcess;
  });

  std::vector<double> times, J;
  for (const auto& r : rep.rows) times.push_back(r.t);
  if (magnetized) {
    double moment = moment_yudovich_norm(snaps.front().e2, *cfg.gf_bar, opt.r_grid).value;
    std::vector<double> g;
    for (const auto& r : rep.rows) g.push_back(1.0 + r.Y2);
    std::vector<double> I = exp_weighted_integral(times, g, cfg.B_sup);
    for (std::size_t i = 0; i < rep.rows.size(); ++i)
      J.push_back(vpb_J_tilde(cfg, rep.rows[i].A, times[i], moment, I[i]));
    rep.metadata["moment_norm"] = moment;
  } else {
    for (const auto& r : rep.rows) J.push_back(J_of_t(cfg, r.A));
  }
  std::vector<double> Jint = cumulative_trapezoid(times, J);

  rep.W0pp_exact = rep.rows.front().Wpp_f;
  rep.W0pp_diag = plan0.cost();
  double budget = -1.0;
  std::string regime_note;
  try {
    budget = admissible_budget(rep.W0pp_exact, cfg);
  } catch (const RegimeError& e) {
    regime_note = e.what();
  }
  CompensatedSum log_ratio;
  int fitted = 0;
  for (std::size_t i = 0; i < rep.rows.size(); ++i) {
    StabilityRow& r = rep.rows[i];
    r.J = J[i];
    r.Jint = Jint[i];
    r.admissible = budget >= 0.0 && r.Jint <= budget;
    r.bound = r.admissible ? bound_value(rep.W0pp_exact, r.Jint, cfg) : kNaN;
    if (r.admissible && r.bound > 0.0 && r.Wpp_f > 0.0) {
      log_ratio.add(std::log(r.Wpp_f / r.bound));
      ++fitted;
    }
    rep.velocity_bound_ok = rep.velocity_bound_ok && r.vbound_excess <= kVelocitySlack;
  }
  rep.kappa = fitted > 0 ? std::exp(log_ratio.value() / fitted) : 1.0;
  for (auto& r : rep.rows) r.bound_fitted = r.admissible ? rep.kappa * r.bound : kNaN;

  nlohmann::json cfg_json{{"bounds", cfg_in.to_json()},
                          {"simulation", sim.to_json()},
                          {"perturbation", pert.to_json()}};
  rep.metadata["config_hash"] = config_hash(cfg_json);
  rep.metadata["seed"] = sim.seed;
  rep.metadata["config"] = cfg_json;
  rep.metadata["constants"] = constants_json(dcfg.consts);
  rep.metadata["C_total"] = C_total(dcfg);
  if (sim.d > 0 && cfg.p > 1.0) rep.metadata["max_C_U"] = max_C_U(cfg);
  rep.metadata["W0pp_exact"] = rep.W0pp_exact;
  rep.metadata["W0pp_diagonal"] = rep.W0pp_diag;
  rep.metadata["diagonal_gap"] = rep.W0pp_diag - rep.W0pp_exact;
  rep.metadata["budget"] = budget >= 0.0 ? nlohmann::json(budget) : nlohmann::json(nullptr);
  if (!regime_note.empty()) rep.metadata["regime_note"] = regime_note;
  rep.metadata["kappa"] = rep.kappa;
  rep.metadata["magnetized"] = magnetized;
  rep.metadata["velocity_bound_ok"] = rep.velocity_bound_ok;
  rep.metadata["control_ok"] = rep.control_ok();
  if (magnetized) rep.metadata["C_B_tilde"] = C_B_tilde(cfg);
  return rep;
}

VelocityBoundTrace run_velocity_bound(Simulation& sim, const MagneticField& B, double dt,
                                      int steps, int output_every,
                                      const std::function<void(const Simulation&)>& on_output) {
  if (output_every < 1) throw std::invalid_argument("output_every must be >= 1");
  VelocityBoundTrace tr;
  VelocityTracker vt(sim.ensemble(), B.sup_norm);
  const double t0 = sim.time();
  for (int s = 0; s <= steps; ++s) {
    if (s > 0) {
      double E0 = max_force(sim.field());
      sim.step_vpb(B, dt);
      vt.advance(dt, E0, max_force(sim.field()));
    }
    if (s % output_every == 0 || s == steps) {
      double ex = vt.excess(sim.ensemble());
      tr.t.push_back(t0 + s * dt);
      tr.max_excess.push_back(ex);
      tr.holds = tr.holds && ex <= kVelocitySlack;
      if (on_output) on_output(sim);
    }
  }
  return tr;
}

}  // namespace kinwass
