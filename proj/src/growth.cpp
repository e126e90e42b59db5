#include "kinwass/growth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "kinwass/errors.hpp"

namespace kinwass {

namespace {

constexpr double kLogTiny = 690.7755278982137;  // -log(1e-300)

void require_p(double p) {
  if (!(p >= 1.0) || !std::isfinite(p)) throw std::domain_error("p must be a finite real >= 1");
}

}  // namespace

double iterated_exp(int n) {
  double x = 1.0;
  for (int i = 0; i < n; ++i) x = std::exp(x);
  return x;
}

double iterated_log(int i, double x) {
  if (i == 0) return x;
  double y = std::abs(std::log(x));
  for (int k = 1; k < i; ++k) y = std::log(y);
  return y;
}

GrowthFunction GrowthFunction::bounded() { return GrowthFunction(); }

GrowthFunction GrowthFunction::orlicz(double alpha) {
  if (!(alpha >= 1.0) || !std::isfinite(alpha))
    throw std::domain_error("orlicz growth needs a finite alpha >= 1");
  GrowthFunction g;
  g.family_ = Family::Orlicz;
  g.alpha_ = alpha;
  return g;
}

GrowthFunction GrowthFunction::iterlog(int n) {
  if (n < 1 || n > 3) throw std::domain_error("iterlog growth supports 1 <= n <= 3");
  GrowthFunction g;
  g.family_ = Family::IterLog;
  g.n_ = n;
  g.iter_threshold_ = iterated_exp(n);
  return g;
}

GrowthFunction GrowthFunction::table(std::vector<std::pair<double, double>> pts) {
  if (pts.empty()) throw std::invalid_argument("growth table is empty");
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (!(pts[i].first > 0.0) || !(pts[i].second > 0.0) || !std::isfinite(pts[i].second))
      throw std::invalid_argument("growth table needs positive abscissae and values");
    if (i > 0 && !(pts[i].first > pts[i - 1].first))
      throw std::invalid_argument("growth table abscissae must be strictly increasing");
    if (i > 0 && pts[i].second < pts[i - 1].second)
      throw std::invalid_argument("growth table values must be nondecreasing");
  }
  GrowthFunction g;
  g.family_ = Family::Table;
  for (auto& [r, v] : pts) g.table_.emplace_back(std::log(r), v);
  double at_one = g.eval_clamped(1.0);
  for (auto& pt : g.table_) pt.second /= at_one;
  return g;
}

GrowthFunction GrowthFunction::from_json(const nlohmann::json& j) {
  std::string fam = j.at("family").get<std::string>();
  if (fam == "bounded") return bounded();
  if (fam == "orlicz") return orlicz(j.at("alpha").get<double>());
  if (fam == "iterlog") return iterlog(j.at("n").get<int>());
  if (fam == "table") {
    std::vector<std::pair<double, double>> pts;
    for (const auto& row : j.at("table")) {
      if (!row.is_array() || row.size() != 2)
        throw std::invalid_argument("growth table rows must be [r, value] pairs");
      pts.emplace_back(row[0].get<double>(), row[1].get<double>());
    }
    return table(std::move(pts));
  }
  throw std::invalid_argument("unknown growth family '" + fam + "'");
}

nlohmann::json GrowthFunction::to_json() const {
  nlohmann::json j;
  switch (family_) {
    case Family::Bounded:
      j["family"] = "bounded";
      break;
    case Family::Orlicz:
      j["family"] = "orlicz";
      j["alpha"] = alpha_;
      break;
    case Family::IterLog:
      j["family"] = "iterlog";
      j["n"] = n_;
      break;
    case Family::Table: {
      j["family"] = "table";
      nlohmann::json rows = nlohmann::json::array();
      for (const auto& [lr, v] : table_) rows.push_back({std::exp(lr), v});
      j["table"] = rows;
      break;
    }
  }
  return j;
}

std::string GrowthFunction::name() const {
  switch (family_) {
    case Family::Bounded:
      return "bounded";
    case Family::Orlicz:
      return "orlicz(" + std::to_string(alpha_) + ")";
    case Family::IterLog:
      return "iterlog(" + std::to_string(n_) + ")";
    case Family::Table:
      return "table";
  }
  return "?";
}

std::vector<double> GrowthFunction::kinks() const {
  std::vector<double> k;
  if (family_ == Family::IterLog) k.push_back(iter_threshold_);
  if (family_ == Family::Table)
    for (const auto& pt : table_) k.push_back(std::exp(pt.first));
  return k;
}

double GrowthFunction::eval_clamped(double r) const {
  r = std::max(r, 1.0);
  switch (family_) {
    case Family::Bounded:
      return 1.0;
    case Family::Orlicz:
      return std::pow(r, 1.0 / alpha_);
    case Family::IterLog: {
      double x = std::max(r, iter_threshold_);
      double v = x;
      double l = x;
      for (int i = 1; i <= n_; ++i) {
        l = (i == 1) ? std::abs(std::log(l)) : std::log(l);
        v *= l * l;
      }
      return v;
    }
    case Family::Table: {
      double lr = std::log(r);
      if (lr <= table_.front().first) return table_.front().second;
      if (lr >= table_.back().first) return table_.back().second;
      auto it = std::upper_bound(table_.begin(), table_.end(), lr,
                                 [](double x, const auto& pt) { return x < pt.first; });
      const auto& hi = *it;
      const auto& lo = *(it - 1);
      double t = (lr - lo.first) / (hi.first - lo.first);
      return lo.second + t * (hi.second - lo.second);
    }
  }
  return 1.0;
}

double GrowthFunction::operator()(double r) const {
  if (!(r >= 1.0)) throw std::domain_error("theta: r must be >= 1");
  return eval_clamped(r);
}

double theta(const GrowthFunction& gf, double r) { return gf(r); }

double phi_theta(const GrowthFunction& gf, int d, double s) {
  if (!(s >= 0.0)) throw std::domain_error("phi_theta: s must be >= 0");
  if (d < 1 || d > 3) throw std::domain_error("phi_theta: d must be 1, 2 or 3");
  if (s == 0.0) return 0.0;
  const double brk = std::exp(-(d + 1.0));
  if (s < brk) {
    double L = -std::log(s);
    return s * L * gf(L);
  }
  return brk * (d + 1.0) * gf(d + 1.0);
}

double phi_p_theta(const GrowthFunction& gf, double p, const GrowthConstants& k, double s) {
  if (!(s >= 0.0)) throw std::domain_error("phi_p_theta: s must be >= 0");
  require_p(p);
  if (s == 0.0) return 0.0;
  double x = std::min(s, k.c_small);
  double L = -std::log(x);
  return x * std::pow(L * gf(L), p);
}

double lambda_of_log(const GrowthFunction& gf, double p, const GrowthConstants& k, double L) {
  double Lc = -std::log(k.c_small);
  L = std::max(L, Lc);
  return std::pow(L * gf(L), 0.5 * p);
}

double lambda_of(const GrowthFunction& gf, double p, const GrowthConstants& k, double s) {
  if (!(s > 0.0)) throw std::domain_error("lambda_of: s must be > 0");
  return lambda_of_log(gf, p, k, -std::log(s));
}

// ---------------------------------------------------------------------------
// Psi

double psi_log_density(const GrowthFunction& gf, const GrowthConstants& k, double u) {
  const double b = k.d + 1.0;
  if (u >= b) return 1.0 / std::sqrt(u * gf(u));
  const double K = std::exp(-b) * b * gf(b);
  return std::exp(-0.5 * u) / std::sqrt(K);
}

namespace {

// int_a^b of 1/sqrt(u Theta(u)) for d+1 <= a < b; integrated in w = log u so
// very long ranges stay well conditioned.
double integrate_regular(const GrowthFunction& gf, double a, double b) {
  using boost::math::quadrature::gauss_kronrod;
  auto f = [&](double w) {
    double u = std::exp(w);
    return std::sqrt(u / gf.eval_clamped(u));
  };
  double wa = std::log(a), wb = std::log(b);
  double total = 0.0;
  // fixed pieces of width <= 1 in w keep the adaptive rule in its comfort zone
  int pieces = std::max(1, static_cast<int>(std::ceil(wb - wa)));
  for (int i = 0; i < pieces; ++i) {
    double lo = wa + (wb - wa) * i / pieces;
    double hi = (i + 1 == pieces) ? wb : wa + (wb - wa) * (i + 1) / pieces;
    total += gauss_kronrod<double, 31>::integrate(f, lo, hi, 15, 1e-14);
  }
  return total;
}

}  // namespace

double psi_log(const GrowthFunction& gf, double p, const GrowthConstants& k, double L) {
  require_p(p);
  const double Lc = -std::log(k.c_small);
  if (std::isnan(L)) throw std::domain_error("psi: argument is nan");
  if (L < Lc) {
    if (Lc - L <= 1e-13 * Lc) return 0.0;
    throw std::domain_error("psi: r must lie in (0, c_small]");
  }
  if (std::isinf(L)) return std::numeric_limits<double>::infinity();
  if (L == Lc) return 0.0;

  const double b = k.d + 1.0;
  double total = 0.0;
  double a = Lc;
  if (a < b) {
    // plateau part of phi_Theta: integrand e^{-u/2}/sqrt(K), closed form
    double hi = std::min(L, b);
    const double K = std::exp(-b) * b * gf(b);
    total += 2.0 / std::sqrt(K) * (std::exp(-0.5 * a) - std::exp(-0.5 * hi));
    a = hi;
  }
  if (a >= L) return total;

  std::vector<double> cuts{a};
  for (double kx : gf.kinks())
    if (kx > a && kx < L) cuts.push_back(kx);
  cuts.push_back(L);
  std::sort(cuts.begin(), cuts.end());
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
    if (cuts[i + 1] > cuts[i]) total += integrate_regular(gf, cuts[i], cuts[i + 1]);
  return total;
}

double psi(const GrowthFunction& gf, double p, const GrowthConstants& k, double r) {
  if (!(r > 0.0) || r > k.c_small * (1.0 + 1e-15))
    throw std::domain_error("psi: r must lie in (0, c_small]");
  return psi_log(gf, p, k, -std::log(r));
}

double psi_inv_log(const GrowthFunction& gf, double p, const GrowthConstants& k, double y) {
  require_p(p);
  if (!(y >= 0.0)) throw std::domain_error("psi_inv: y must be >= 0");
  const double Lc = -std::log(k.c_small);
  if (y == 0.0) return Lc;
  if (std::isinf(y)) return std::numeric_limits<double>::infinity();

  double lo = Lc, hi = 2.0 * Lc;
  double f_hi = psi_log(gf, p, k, hi) - y;
  while (f_hi < 0.0) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e300) return std::numeric_limits<double>::infinity();
    f_hi = psi_log(gf, p, k, hi) - y;
  }
  // safeguarded Newton on an increasing function
  double x = 0.5 * (lo + hi);
  const double tol = 1e-12 * std::max(1.0, y);
  for (int it = 0; it < 200; ++it) {
    double f = psi_log(gf, p, k, x) - y;
    if (std::abs(f) <= tol) return x;
    if (f < 0.0)
      lo = x;
    else
      hi = x;
    double step = f / psi_log_density(gf, k, x);
    double nx = x - step;
    if (!(nx > lo && nx < hi)) nx = 0.5 * (lo + hi);
    if (nx == x || hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi) return nx;
    x = nx;
  }
  return x;
}

double psi_inv(const GrowthFunction& gf, double p, const GrowthConstants& k, double y) {
  return std::exp(-psi_inv_log(gf, p, k, y));
}

// ---------------------------------------------------------------------------
// Phi = s / lambda(s)

namespace {

// log Phi as a function of L = -log s
double log_phi_forward(const GrowthFunction& gf, double p, const GrowthConstants& k, double L) {
  return -L - std::log(lambda_of_log(gf, p, k, L));
}

// L at the end of the increasing prefix of Phi on (0, c].
double window_L(const GrowthFunction& gf, double p, const GrowthConstants& k) {
  const double Lc = -std::log(k.c_small);
  const int n = 10000;
  const double Lmax = std::max(kLogTiny, Lc + 1.0);
  double prev = -std::numeric_limits<double>::infinity();
  double last_ok = Lmax;
  for (int i = 0; i < n; ++i) {
    // s ascending means L descending
    double L = Lmax - (Lmax - Lc) * i / (n - 1);
    double v = log_phi_forward(gf, p, k, L);
    if (!(v > prev)) break;
    prev = v;
    last_ok = L;
  }
  return last_ok;
}

}  // namespace

double phi_forward(const GrowthFunction& gf, double p, const GrowthConstants& k, double s) {
  return s / lambda_of(gf, p, k, s);
}

double phi_window(const GrowthFunction& gf, double p, const GrowthConstants& k) {
  require_p(p);
  return std::exp(log_phi_forward(gf, p, k, window_L(gf, p, k)));
}

double phi_inv_log(const GrowthFunction& gf, double p, const GrowthConstants& k, double log_w) {
  require_p(p);
  const double Lw = window_L(gf, p, k);
  const double top = log_phi_forward(gf, p, k, Lw);
  if (std::isnan(log_w) || log_w > top + 1e-14 * std::abs(top))
    throw RegimeError("phi_inv: initial distance outside the invertibility window (w = " +
                      std::to_string(std::exp(log_w)) + ", window = " +
                      std::to_string(std::exp(top)) + ")");
  double lo = Lw;  // log Phi(lo) >= log_w
  double hi = std::max(Lw, -log_w);
  while (log_phi_forward(gf, p, k, hi) > log_w) {
    lo = hi;
    hi *= 2.0;
  }
  for (int it = 0; it < 400; ++it) {
    double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (log_phi_forward(gf, p, k, mid) > log_w)
      lo = mid;
    else
      hi = mid;
  }
  double flo = std::abs(log_phi_forward(gf, p, k, lo) - log_w);
  double fhi = std::abs(log_phi_forward(gf, p, k, hi) - log_w);
  return flo <= fhi ? lo : hi;
}

double phi_inv(const GrowthFunction& gf, double p, const GrowthConstants& k, double w) {
  if (!(w > 0.0)) throw RegimeError("phi_inv: w must be > 0");
  return std::exp(-phi_inv_log(gf, p, k, std::log(w)));
}

// ---------------------------------------------------------------------------
// constants

GrowthConstants paper_constants(const GrowthFunction& gf, double p, int d) {
  require_p(p);
  if (d < 1 || d > 3) throw std::domain_error("d must be 1, 2 or 3");
  GrowthConstants k;
  k.d = d;
  double log_c = 0.0;
  switch (gf.family()) {
    case Family::Bounded:
      log_c = -std::max(p, d + 1.0);
      k.C_log = 1.0 + p / 2.0;
      k.C_bar = 1.0;
      break;
    case Family::Orlicz: {
      double beta = 1.0 + 1.0 / gf.alpha();
      log_c = -std::max(p * beta, d + 1.0);
      k.C_log = 1.0 + p * beta / 2.0;
      k.C_bar = std::pow(1.0 + p * beta / 2.0, 1.0 / gf.alpha());
      break;
    }
    case Family::IterLog: {
      int n = gf.n();
      if (n > 2) throw std::domain_error("iterlog constants underflow double precision for n > 2");
      // exp_{n+1}(1)^{-2p} = exp(-2p exp_n(1))
      log_c = -std::max(2.0 * p * iterated_exp(n), d + 1.0);
      double K = 1.0 + p * (n + 1);
      k.C_log = K;
      double prod = 1.0;
      for (int i = 0; i <= n; ++i) prod *= std::pow(2.0, i) * iterated_log(i, K);
      k.C_bar = K * prod;
      break;
    }
    case Family::Table:
      throw std::invalid_argument("tabulated growth functions need user-supplied constants");
  }
  k.c_small = std::exp(log_c);
  k.C_phi = compute_C_phi(gf, p, d, k.c_small);
  return k;
}

double compute_C_phi(const GrowthFunction& gf, double p, int d, double c_small) {
  require_p(p);
  const double root = std::pow(c_small, 1.0 / p);
  const double brk = std::exp(-(d + 1.0));
  double best = phi_theta(gf, d, brk);  // plateau value
  if (root < brk) {
    const int n = 4000;
    double la = std::log(root), lb = std::log(brk);
    for (int i = 0; i <= n; ++i) {
      double s = std::exp(la + (lb - la) * i / n);
      best = std::max(best, phi_theta(gf, d, std::min(s, brk)));
    }
  }
  return best / root;
}

GrowthConstants make_constants(const GrowthFunction& gf, double p, int d, double c_small,
                               double C_log, double C_bar) {
  if (!(c_small > 0.0) || !(c_small < std::exp(-1.0)))
    throw std::domain_error("c_small must lie in (0, 1/e)");
  if (!(C_log > 0.0) || !(C_bar > 0.0)) throw std::domain_error("constants must be positive");
  GrowthConstants k;
  k.d = d;
  k.c_small = c_small;
  k.C_log = C_log;
  k.C_bar = C_bar;
  k.C_phi = compute_C_phi(gf, p, d, c_small);
  return k;
}

// ---------------------------------------------------------------------------
// assumption checks

nlohmann::json AssumptionReport::to_json() const {
  auto one = [](const CheckResult& c) {
    return nlohmann::json{{"pass", c.pass}, {"worst_margin", c.worst_margin},
                          {"worst_at", c.worst_at}};
  };
  return nlohmann::json{{"log_domination", one(log_domination)},
                        {"theta_domination", one(theta_domination)},
                        {"monotone_concave", one(monotone_concave)},
                        {"continuity", one(continuity)},
                        {"all_pass", all_pass()}};
}

namespace {

void note(CheckResult& c, double margin, double where, double tol = 0.0) {
  if (margin < c.worst_margin || c.worst_at == 0.0) {
    c.worst_margin = margin;
    c.worst_at = where;
  }
  if (margin < -tol) c.pass = false;
}

}  // namespace

AssumptionReport verify_assumptions(const GrowthFunction& gf, double p, int d,
                                    const GrowthConstants& k, int n_grid) {
  require_p(p);
  AssumptionReport rep;
  rep.log_domination.worst_margin = std::numeric_limits<double>::infinity();
  rep.theta_domination.worst_margin = std::numeric_limits<double>::infinity();
  rep.monotone_concave.worst_margin = std::numeric_limits<double>::infinity();

  const double Lc = -std::log(k.c_small);
  const double Lmax = std::max(kLogTiny, Lc + 1.0);
  std::vector<double> Ls(n_grid), fs(n_grid);
  for (int i = 0; i < n_grid; ++i) {
    // s ascending from 1e-300 to c
    Ls[i] = Lmax - (Lmax - Lc) * i / (n_grid - 1);
  }
  for (int i = 0; i < n_grid; ++i) {
    double L = Ls[i];
    double s = std::exp(-L);
    double lam = lambda_of_log(gf, p, k, L);
    double lhs = std::abs(-L - std::log(lam));
    note(rep.log_domination, (k.C_log * L - lhs) / (k.C_log * L), s);
    double th = gf(L);
    note(rep.theta_domination, (k.C_bar * th - gf(lhs)) / (k.C_bar * th), s);
    fs[i] = phi_p_theta(gf, p, k, s);
  }

  // monotone and midpoint concave on the grid, plus wide pairs
  const double tol = 1e-12;
  for (int i = 0; i + 1 < n_grid; ++i) {
    double inc = (fs[i + 1] - fs[i]) / std::max(fs[i + 1], 1e-300);
    note(rep.monotone_concave, inc, std::exp(-Ls[i]), tol);
  }
  for (int stride : {1, 7, 61, 509, n_grid - 1}) {
    for (int i = 0; i + stride < n_grid; ++i) {
      double a = std::exp(-Ls[i]), b = std::exp(-Ls[i + stride]);
      double mid = phi_p_theta(gf, p, k, 0.5 * (a + b));
      double avg = 0.5 * (fs[i] + fs[i + stride]);
      note(rep.monotone_concave, (mid - avg) / std::max(avg, 1e-300), 0.5 * (a + b), tol);
    }
  }

  const double brk = std::exp(-(d + 1.0));
  const double left = brk * (d + 1.0) * gf(d + 1.0);
  const double plateau = phi_theta(gf, d, brk);
  const double near = phi_theta(gf, d, brk * (1.0 - 1e-10));
  double jump = std::abs(left - plateau) / plateau;
  double approach = std::abs(near - plateau) / plateau;
  rep.continuity.worst_at = brk;
  rep.continuity.worst_margin = -jump;
  rep.continuity.pass = jump <= 1e-12 && approach <= 1e-8;
  return rep;
}

}  // namespace kinwass
