#include "kinwass/vlasov.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <mutex>
#include <numbers>
#include <random>
#include <stdexcept>

#include "kinwass/errors.hpp"
#include "kinwass/numeric.hpp"

namespace kinwass {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

double wrap01(double x) {
  double y = x - std::floor(x);
  return y >= 1.0 ? 0.0 : y;
}

// CIC stencil along one axis.
inline void cic_axis(double x, int n, int& i0, int& i1, double& w0, double& w1) {
  double g = x * n;
  double fl = std::floor(g);
  double f = g - fl;
  long i = static_cast<long>(fl) % n;
  if (i < 0) i += n;
  i0 = static_cast<int>(i);
  i1 = i0 + 1 == n ? 0 : i0 + 1;
  w1 = f;
  w0 = 1.0 - f;
}

double torus_norm(const double* x, const double* y, int d) {
  double s = 0.0;
  for (int a = 0; a < d; ++a) {
    double t = torus_delta(x[a], y[a]);
    s += t * t;
  }
  return std::sqrt(s);
}

}  // namespace

// ---------------------------------------------------------------------------
// ensembles

void ParticleEnsemble::wrap() {
  for (double& xi : x) xi = wrap01(xi);
}

EmpiricalMeasure ParticleEnsemble::measure() const {
  EmpiricalMeasure m;
  m.d = d;
  m.domain = Domain::Torus;
  m.x = x;
  m.v = v;
  m.w = w;
  return m;
}

std::size_t grid_cells(int d, int n) {
  std::size_t c = 1;
  for (int a = 0; a < d; ++a) c *= static_cast<std::size_t>(n);
  return c;
}

std::vector<double> deposit(int d, const std::vector<double>& x, const std::vector<double>& w,
                            int grid_n) {
  if (grid_n < 2 || (grid_n & (grid_n - 1)) != 0)
    throw std::invalid_argument("deposit: grid_n must be a power of two");
  if (d < 1 || d > 3) throw std::invalid_argument("deposit: d must be 1, 2 or 3");
  const std::size_t cells = grid_cells(d, grid_n);
  std::vector<double> rho(cells, 0.0);
  const double scale = static_cast<double>(cells);
  int idx[3][2];
  double wt[3][2];
  for (std::size_t p = 0; p < w.size(); ++p) {
    for (int a = 0; a < d; ++a)
      cic_axis(x[p * d + a], grid_n, idx[a][0], idx[a][1], wt[a][0], wt[a][1]);
    for (int corner = 0; corner < (1 << d); ++corner) {
      std::size_t lin = 0;
      double k = w[p] * scale;
      for (int a = 0; a < d; ++a) {
        int b = (corner >> a) & 1;
        lin = lin * grid_n + idx[a][b];
        k *= wt[a][b];
      }
      rho[lin] += k;
    }
  }
  return rho;
}

std::vector<double> deposit(const ParticleEnsemble& ens, int grid_n) {
  return deposit(ens.d, ens.x, ens.w, grid_n);
}

double interpolate(const double* grid, int d, int n, const double* x) {
  int idx[3][2];
  double wt[3][2];
  for (int a = 0; a < d; ++a) cic_axis(x[a], n, idx[a][0], idx[a][1], wt[a][0], wt[a][1]);
  double acc = 0.0;
  for (int corner = 0; corner < (1 << d); ++corner) {
    std::size_t lin = 0;
    double k = 1.0;
    for (int a = 0; a < d; ++a) {
      int b = (corner >> a) & 1;
      lin = lin * n + idx[a][b];
      k *= wt[a][b];
    }
    acc += k * grid[lin];
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Poisson

struct PoissonSolver::Impl {
  std::size_t real_size = 0, complex_size = 0;
  double* real = nullptr;
  fftw_complex* spec = nullptr;
  fftw_complex* work = nullptr;
  fftw_plan fwd = nullptr, bwd = nullptr;
  // per complex index: integer frequency per axis, Nyquist flag per axis
  std::vector<std::array<int, 3>> freq;
  std::vector<std::array<bool, 3>> nyq;
};

PoissonSolver::PoissonSolver(int d, int grid_n) : d_(d), n_(grid_n), impl_(new Impl) {
  if (d < 1 || d > 3) throw std::invalid_argument("PoissonSolver: d must be 1, 2 or 3");
  if (grid_n < 2 || (grid_n & (grid_n - 1)) != 0)
    throw std::invalid_argument("PoissonSolver: grid_n must be a power of two");
  auto& m = *impl_;
  m.real_size = grid_cells(d, grid_n);
  m.complex_size = m.real_size / grid_n * (grid_n / 2 + 1);
  int dims[3] = {grid_n, grid_n, grid_n};
  {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    m.real = fftw_alloc_real(m.real_size);
    m.spec = fftw_alloc_complex(m.complex_size);
    m.work = fftw_alloc_complex(m.complex_size);
    m.fwd = fftw_plan_dft_r2c(d, dims, m.real, m.spec, FFTW_ESTIMATE);
    m.bwd = fftw_plan_dft_c2r(d, dims, m.work, m.real, FFTW_ESTIMATE);
  }
  m.freq.resize(m.complex_size);
  m.nyq.resize(m.complex_size);
  const int half = grid_n / 2 + 1;
  for (std::size_t c = 0; c < m.complex_size; ++c) {
    std::size_t rem = c;
    std::array<int, 3> j{0, 0, 0};
    j[d - 1] = static_cast<int>(rem % half);
    rem /= half;
    for (int a = d - 2; a >= 0; --a) {
      j[a] = static_cast<int>(rem % grid_n);
      rem /= grid_n;
    }
    for (int a = 0; a < d; ++a) {
      m.freq[c][a] = j[a] <= grid_n / 2 ? j[a] : j[a] - grid_n;
      m.nyq[c][a] = j[a] == grid_n / 2;
    }
  }
}

PoissonSolver::~PoissonSolver() {
  std::lock_guard<std::mutex> lock(fftw_planner_mutex());
  fftw_destroy_plan(impl_->fwd);
  fftw_destroy_plan(impl_->bwd);
  fftw_free(impl_->real);
  fftw_free(impl_->spec);
  fftw_free(impl_->work);
}

void PoissonSolver::solve(const std::vector<double>& rho, int sigma, FieldState& out) {
  auto& m = *impl_;
  if (rho.size() != m.real_size) throw std::invalid_argument("poisson: grid size mismatch");
  if (sigma != 1 && sigma != -1) throw std::invalid_argument("poisson: sigma must be +1 or -1");
  double mean = compensated_sum(rho) / static_cast<double>(m.real_size);
  if (std::abs(mean - 1.0) > 1e-10)
    throw std::invalid_argument("poisson: density must have mean 1 on the torus");

  std::copy(rho.begin(), rho.end(), m.real);
  fftw_execute(m.fwd);
  const double norm = 1.0 / static_cast<double>(m.real_size);
  // spec <- U hat
  for (std::size_t c = 0; c < m.complex_size; ++c) {
    double k2 = 0.0;
    for (int a = 0; a < d_; ++a) {
      double k = kTwoPi * m.freq[c][a];
      k2 += k * k;
    }
    if (k2 == 0.0) {
      m.spec[c][0] = m.spec[c][1] = 0.0;
    } else {
      double f = norm / (sigma * -k2);
      m.spec[c][0] *= f;
      m.spec[c][1] *= f;
    }
  }
  out.d = d_;
  out.grid_n = n_;
  out.rho = rho;
  out.U.resize(m.real_size);
  out.gradU.resize(m.real_size * d_);

  std::copy(&m.spec[0][0], &m.spec[0][0] + 2 * m.complex_size, &m.work[0][0]);
  fftw_execute(m.bwd);
  std::copy(m.real, m.real + m.real_size, out.U.begin());

  for (int a = 0; a < d_; ++a) {
    for (std::size_t c = 0; c < m.complex_size; ++c) {
      if (m.nyq[c][a]) {
        m.work[c][0] = m.work[c][1] = 0.0;
        continue;
      }
      double k = kTwoPi * m.freq[c][a];
      // i k (re + i im) = -k im + i k re
      m.work[c][0] = -k * m.spec[c][1];
      m.work[c][1] = k * m.spec[c][0];
    }
    fftw_execute(m.bwd);
    std::copy(m.real, m.real + m.real_size, out.gradU.begin() + a * m.real_size);
  }
}

double PoissonSolver::residual(const FieldState& f, int sigma) {
  auto& m = *impl_;
  if (f.U.size() != m.real_size) throw std::invalid_argument("poisson: grid size mismatch");
  std::copy(f.U.begin(), f.U.end(), m.real);
  fftw_execute(m.fwd);
  const double norm = 1.0 / static_cast<double>(m.real_size);
  for (std::size_t c = 0; c < m.complex_size; ++c) {
    double k2 = 0.0;
    for (int a = 0; a < d_; ++a) {
      double k = kTwoPi * m.freq[c][a];
      k2 += k * k;
    }
    m.work[c][0] = -k2 * norm * m.spec[c][0];
    m.work[c][1] = -k2 * norm * m.spec[c][1];
  }
  fftw_execute(m.bwd);
  double r = 0.0;
  for (std::size_t i = 0; i < m.real_size; ++i)
    r = std::max(r, std::abs(sigma * m.real[i] - (f.rho[i] - 1.0)));
  return r;
}

double max_force(const FieldState& f) {
  const std::size_t cells = f.U.size();
  double best = 0.0;
  for (std::size_t i = 0; i < cells; ++i) {
    double s = 0.0;
    for (int a = 0; a < f.d; ++a) s += f.gradU[a * cells + i] * f.gradU[a * cells + i];
    best = std::max(best, s);
  }
  return std::sqrt(best);
}

// ---------------------------------------------------------------------------
// magnetic field

MagneticField MagneticField::uniform(std::array<double, 3> b) {
  MagneticField m;
  m.B = [b](double, const double*) { return b; };
  m.sup_norm = std::sqrt(b[0] * b[0] + b[1] * b[1] + b[2] * b[2]);
  m.loglip_const = 0.0;
  m.description = {{"kind", "uniform"}, {"B", b}};
  return m;
}

double MagneticField::sampled_sup(int d, double T, int n_space, int n_time) const {
  double best = 0.0;
  std::vector<double> x(d);
  std::size_t total = grid_cells(d, n_space);
  for (int it = 0; it <= n_time; ++it) {
    double t = n_time > 0 ? T * it / n_time : 0.0;
    for (std::size_t c = 0; c < total; ++c) {
      std::size_t rem = c;
      for (int a = d - 1; a >= 0; --a) {
        x[a] = static_cast<double>(rem % n_space) / n_space;
        rem /= n_space;
      }
      auto b = B(t, x.data());
      best = std::max(best, std::sqrt(b[0] * b[0] + b[1] * b[1] + b[2] * b[2]));
    }
  }
  return best;
}

void boris_rotate(int d, double* v, const std::array<double, 3>& B, double h) {
  if (d == 2) {
    if (B[0] != 0.0 || B[1] != 0.0)
      throw std::domain_error("in d = 2 only the out-of-plane component of B is supported");
    double t = 0.5 * h * B[2];
    double s = 2.0 * t / (1.0 + t * t);
    double px = v[0] + v[1] * t;
    double py = v[1] - v[0] * t;
    v[0] += py * s;
    v[1] -= px * s;
    return;
  }
  if (d != 3) throw std::domain_error("magnetized dynamics needs d = 2 or d = 3");
  double t[3] = {0.5 * h * B[0], 0.5 * h * B[1], 0.5 * h * B[2]};
  double t2 = t[0] * t[0] + t[1] * t[1] + t[2] * t[2];
  double s[3] = {2 * t[0] / (1 + t2), 2 * t[1] / (1 + t2), 2 * t[2] / (1 + t2)};
  double p[3] = {v[0] + (v[1] * t[2] - v[2] * t[1]), v[1] + (v[2] * t[0] - v[0] * t[2]),
                 v[2] + (v[0] * t[1] - v[1] * t[0])};
  v[0] += p[1] * s[2] - p[2] * s[1];
  v[1] += p[2] * s[0] - p[0] * s[2];
  v[2] += p[0] * s[1] - p[1] * s[0];
}

// ---------------------------------------------------------------------------
// simulation

Simulation::Simulation(ParticleEnsemble ens, int grid_n, double c_cfl)
    : ens_(std::move(ens)), solver_(ens_.d, grid_n), c_cfl_(c_cfl) {
  if (ens_.x.size() != ens_.size() * ens_.d || ens_.v.size() != ens_.size() * ens_.d)
    throw std::invalid_argument("simulation: ensemble arrays do not match N x d");
  ens_.wrap();
  refresh_field();
}

void Simulation::refresh_field() {
  std::vector<double> rho = deposit(ens_, solver_.grid_n());
  double t = field_.t;
  solver_.solve(rho, ens_.sigma, field_);
  field_.t = t;
  const std::size_t N = ens_.size(), cells = field_.U.size();
  const int d = ens_.d, n = solver_.grid_n();
  acc_.resize(N * d);
  for (std::size_t p = 0; p < N; ++p)
    for (int a = 0; a < d; ++a)
      acc_[p * d + a] = -interpolate(field_.gradU.data() + a * cells, d, n, &ens_.x[p * d]);
}

void Simulation::kick(double h) {
  for (std::size_t i = 0; i < ens_.v.size(); ++i) ens_.v[i] += h * acc_[i];
}

void Simulation::drift(double h) {
  for (std::size_t i = 0; i < ens_.x.size(); ++i) ens_.x[i] = wrap01(ens_.x[i] + h * ens_.v[i]);
}

void Simulation::rotate(const MagneticField& B, double t, double h) {
  const int d = ens_.d;
  for (std::size_t p = 0; p < ens_.size(); ++p)
    boris_rotate(d, &ens_.v[p * d], B.B(t, &ens_.x[p * d]), h);
}

std::pair<double, std::size_t> Simulation::cfl_limit() const {
  const int d = ens_.d;
  const double inf = std::numeric_limits<double>::infinity();
  double vmax = 0.0;
  std::size_t arg_v = 0;
  for (std::size_t p = 0; p < ens_.size(); ++p) {
    double s = 0.0;
    for (int a = 0; a < d; ++a) s += ens_.v[p * d + a] * ens_.v[p * d + a];
    if (s > vmax) {
      vmax = s;
      arg_v = p;
    }
  }
  vmax = std::sqrt(vmax);
  double dev = 0.0;
  std::size_t arg_node = 0;
  for (std::size_t i = 0; i < field_.rho.size(); ++i)
    if (std::abs(field_.rho[i] - 1.0) > dev) {
      dev = std::abs(field_.rho[i] - 1.0);
      arg_node = i;
    }
  const int n = solver_.grid_n();
  double lim_v = vmax > 0.0 ? (1.0 / n) / vmax : inf;
  double lim_rho = dev > 0.0 ? 1.0 / std::sqrt(dev) : inf;
  if (lim_v <= lim_rho) return {c_cfl_ * lim_v, arg_v};
  // particle nearest to the node with the largest density excursion
  std::vector<double> node(d);
  std::size_t rem = arg_node;
  for (int a = d - 1; a >= 0; --a) {
    node[a] = static_cast<double>(rem % n) / n;
    rem /= n;
  }
  std::size_t arg = 0;
  double best = inf;
  for (std::size_t p = 0; p < ens_.size(); ++p) {
    double r = torus_norm(&ens_.x[p * d], node.data(), d);
    if (r < best) {
      best = r;
      arg = p;
    }
  }
  return {c_cfl_ * lim_rho, arg};
}

void Simulation::check_cfl(double dt) const {
  if (!(dt > 0.0)) throw std::invalid_argument("time step must be > 0");
  auto [lim, who] = cfl_limit();
  if (dt > lim * (1.0 + 1e-12))
    throw CflError("time step " + format_double(dt) + " exceeds the CFL limit " +
                       format_double(lim) + " set by particle " + std::to_string(who),
                   who);
}

void Simulation::step_vp(double dt) {
  check_cfl(dt);
  kick(0.5 * dt);
  drift(dt);
  refresh_field();
  kick(0.5 * dt);
  field_.t += dt;
}

void Simulation::step_vpb(const MagneticField& B, double dt) {
  if (ens_.d != 2 && ens_.d != 3)
    throw std::domain_error("magnetized dynamics needs d = 2 or d = 3");
  check_cfl(dt);
  const double t0 = field_.t;
  kick(0.5 * dt);
  rotate(B, t0, 0.5 * dt);
  drift(dt);
  refresh_field();
  rotate(B, t0 + dt, 0.5 * dt);
  kick(0.5 * dt);
  field_.t = t0 + dt;
}

double Simulation::kinetic_energy() const {
  CompensatedSum s;
  const int d = ens_.d;
  for (std::size_t p = 0; p < ens_.size(); ++p) {
    double v2 = 0.0;
    for (int a = 0; a < d; ++a) v2 += ens_.v[p * d + a] * ens_.v[p * d + a];
    s.add(0.5 * ens_.w[p] * v2);
  }
  return s.value();
}

double Simulation::field_energy() const {
  CompensatedSum s;
  const std::size_t cells = field_.U.size();
  for (int a = 0; a < field_.d; ++a)
    for (std::size_t i = 0; i < cells; ++i) s.add(field_.gradU[a * cells + i] * field_.gradU[a * cells + i]);
  return -0.5 * ens_.sigma * s.value() / static_cast<double>(cells);
}

std::vector<double> Simulation::momentum() const {
  const int d = ens_.d;
  std::vector<CompensatedSum> s(d);
  for (std::size_t p = 0; p < ens_.size(); ++p)
    for (int a = 0; a < d; ++a) s[a].add(ens_.w[p] * ens_.v[p * d + a]);
  std::vector<double> out(d);
  for (int a = 0; a < d; ++a) out[a] = s[a].value();
  return out;
}

// ---------------------------------------------------------------------------
// norms

std::vector<double> default_r_grid() {
  std::vector<double> r;
  for (int k = 0; k <= 24; ++k) r.push_back(std::exp2(0.5 * k));
  return r;
}

double grid_lp_norm(const std::vector<double>& h, double r) {
  if (h.empty()) return 0.0;
  double m = 0.0;
  for (double x : h) m = std::max(m, std::abs(x));
  if (std::isinf(r) || m == 0.0) return m;
  if (!(r >= 1.0)) throw std::domain_error("grid_lp_norm: r must be >= 1");
  CompensatedSum s;
  for (double x : h) s.add(std::pow(std::abs(x) / m, r));
  return m * std::pow(s.value() / static_cast<double>(h.size()), 1.0 / r);
}

namespace {

void check_r_grid(const std::vector<double>& r_grid) {
  if (r_grid.empty() || r_grid.front() != 1.0)
    throw std::invalid_argument("r_grid must start at 1");
  for (std::size_t i = 1; i < r_grid.size(); ++i)
    if (!(r_grid[i] > r_grid[i - 1]) || !std::isfinite(r_grid[i]))
      throw std::invalid_argument("r_grid must be finite and increasing");
}

}  // namespace

NormResult yudovich_norm(const std::vector<double>& rho, const GrowthFunction& gf,
                         const std::vector<double>& r_grid) {
  check_r_grid(r_grid);
  NormResult best;
  best.value = -1.0;
  for (double r : r_grid) {
    double v = grid_lp_norm(rho, r) / gf(r);
    if (v > best.value) {
      best.value = v;
      best.attained_r = r;
    }
  }
  return best;
}

NormResult moment_yudovich_norm(const ParticleEnsemble& ens, const GrowthFunction& gf_bar,
                                const std::vector<double>& r_grid) {
  check_r_grid(r_grid);
  const int d = ens.d;
  std::vector<double> speed(ens.size());
  double m = 0.0;
  for (std::size_t p = 0; p < ens.size(); ++p) {
    double s = 0.0;
    for (int a = 0; a < d; ++a) s += ens.v[p * d + a] * ens.v[p * d + a];
    speed[p] = std::sqrt(s);
    m = std::max(m, speed[p]);
  }
  NormResult best;
  best.value = -1.0;
  for (double r : r_grid) {
    double moment = 0.0;
    if (m > 0.0) {
      CompensatedSum s;
      for (std::size_t p = 0; p < ens.size(); ++p) s.add(ens.w[p] * std::pow(speed[p] / m, r));
      moment = m * std::pow(s.value(), 1.0 / r);
    }
    double v = moment / gf_bar(r);
    if (v > best.value) {
      best.value = v;
      best.attained_r = r;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// force regularity

nlohmann::json ForceProbe::to_json() const {
  return {{"modulus_ratio", modulus_ratio},
          {"sup_ratio", sup_ratio},
          {"slope", slope},
          {"pairs", pairs}};
}

ForceProbe force_regularity_probe(const FieldState& field, const GrowthFunction& gf, int d,
                                  std::size_t n_pairs, std::uint64_t seed,
                                  const std::vector<double>& r_grid) {
  if (field.d != d) throw std::invalid_argument("force probe: dimension mismatch");
  ForceProbe out;
  const std::size_t cells = field.U.size();
  const int n = field.grid_n;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> x(d), y(d), lx, ly;
  for (std::size_t k = 0; k < n_pairs; ++k) {
    for (int a = 0; a < d; ++a) {
      x[a] = unif(rng);
      y[a] = unif(rng);
    }
    double dist = torus_norm(x.data(), y.data(), d);
    if (dist == 0.0) continue;
    double diff = 0.0;
    for (int a = 0; a < d; ++a) {
      const double* g = field.gradU.data() + a * cells;
      double e = interpolate(g, d, n, x.data()) - interpolate(g, d, n, y.data());
      diff += e * e;
    }
    diff = std::sqrt(diff);
    double ratio = diff / phi_theta(gf, d, dist);
    out.modulus_ratio = std::max(out.modulus_ratio, ratio);
    ++out.pairs;
    if (ratio > 0.0) {
      lx.push_back(std::log(dist));
      ly.push_back(std::log(ratio));
    }
  }
  if (lx.size() >= 2) out.slope = linear_fit(lx, ly).slope;
  double y_norm = yudovich_norm(field.rho, gf, r_grid).value;
  out.sup_ratio = max_force(field) / (1.0 + y_norm);
  return out;
}

// ---------------------------------------------------------------------------
// initial data

namespace {

double param(const nlohmann::json& p, const char* key, double def) {
  if (!p.is_object() || !p.contains(key)) return def;
  if (!p.at(key).is_number()) throw ConfigError(std::string("initial.") + key + " must be a number");
  return p.at(key).get<double>();
}

// Quiet-start lattice positions; random when N is not a perfect d-th power.
void lattice_positions(ParticleEnsemble& e, std::size_t N, std::mt19937_64& rng) {
  const int d = e.d;
  e.x.resize(N * d);
  std::size_t m = static_cast<std::size_t>(std::llround(std::pow(static_cast<double>(N), 1.0 / d)));
  if (grid_cells(d, static_cast<int>(m)) == N) {
    for (std::size_t p = 0; p < N; ++p) {
      std::size_t rem = p;
      for (int a = d - 1; a >= 0; --a) {
        e.x[p * d + a] = (static_cast<double>(rem % m) + 0.5) / static_cast<double>(m);
        rem /= m;
      }
    }
  } else {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (double& xi : e.x) xi = unif(rng);
  }
}

void displace(ParticleEnsemble& e, double amplitude, double mode) {
  if (amplitude == 0.0) return;
  const double k = kTwoPi * mode;
  for (std::size_t p = 0; p < e.size(); ++p) {
    double& x0 = e.x[p * e.d];
    x0 -= amplitude / k * std::sin(k * x0);
  }
}

double torus_abs(double x, double c) { return torus_delta(x, c); }

}  // namespace

ParticleEnsemble make_initial(const std::string& kind, const nlohmann::json& params, int d,
                              std::size_t N, std::uint64_t seed, int sigma) {
  if (d < 1 || d > 3) throw ConfigError("initial data: d must be 1, 2 or 3");
  if (N == 0) throw ConfigError("initial data: N must be > 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  ParticleEnsemble e;
  e.d = d;
  e.sigma = sigma;
  e.w.assign(N, 1.0 / static_cast<double>(N));
  e.v.assign(N * d, 0.0);

  if (kind == "uniform_perturbed" || kind == "two_stream") {
    const double amp = param(params, "amplitude", 0.0);
    const double mode = param(params, "mode", 1.0);
    const double vth = param(params, "vth", 0.0);
    const double drift = param(params, "drift", 0.0);
    const double v0 = kind == "two_stream" ? param(params, "v0", 0.5) : 0.0;
    if (vth < 0.0) throw ConfigError("initial.vth must be >= 0");
    lattice_positions(e, N, rng);
    displace(e, amp, mode);
    for (std::size_t p = 0; p < N; ++p)
      for (int a = 0; a < d; ++a) {
        double v = vth > 0.0 ? vth * normal(rng) : 0.0;
        if (a == 0) v += drift + (p % 2 == 0 ? v0 : -v0);
        e.v[p * d + a] = v;
      }
    e.wrap();
    return e;
  }

  if (kind == "yudovich_datum") {
    const nlohmann::json prof = params.is_object() && params.contains("profile")
                                    ? params.at("profile")
                                    : nlohmann::json{{"type", "indicator"}};
    const std::string type = prof.value("type", std::string("indicator"));
    std::function<double(double)> theta;
    std::function<double()> sample;
    if (type == "indicator") {
      double lo = param(prof, "lo", 0.0), hi = param(prof, "hi", 0.5);
      double height = param(prof, "height", 1.0 / (hi - lo));
      if (!(lo >= 0.0 && hi <= 1.0 && lo < hi) || !(height > 0.0))
        throw ConfigError("indicator profile needs 0 <= lo < hi <= 1 and height > 0");
      theta = [=](double x) { return x >= lo && x < hi ? height : 0.0; };
      sample = [&, lo, hi] { return lo + (hi - lo) * unif(rng); };
    } else if (type == "power") {
      double c = param(prof, "center", 0.5), gamma = param(prof, "gamma", 0.5);
      double scale = param(prof, "scale", 1.0);
      if (!(gamma >= 0.0 && gamma < 1.0))
        throw ConfigError("power profile needs 0 <= gamma < 1 to be integrable");
      if (!(scale > 0.0)) throw ConfigError("power profile needs scale > 0");
      theta = [=](double x) {
        double r = torus_abs(x, c);
        return r > 0.0 ? scale * std::pow(r, -gamma) : std::numeric_limits<double>::infinity();
      };
      // |y| has density proportional to |y|^{-gamma} on [0, 1/2]
      sample = [&, c, gamma] {
        double r = 0.5 * std::pow(unif(rng), 1.0 / (1.0 - gamma));
        double s = unif(rng) < 0.5 ? -r : r;
        return wrap01(c + s);
      };
    } else if (type == "cosine") {
      double a = param(prof, "amplitude", 0.5), mode = param(prof, "mode", 1.0);
      if (!(std::abs(a) <= 1.0)) throw ConfigError("cosine profile needs |amplitude| <= 1");
      theta = [=](double x) { return 1.0 + a * std::cos(kTwoPi * mode * x); };
      // inverse CDF on a fine grid
      const int M = 1 << 16;
      auto cdf = std::make_shared<std::vector<double>>(M + 1, 0.0);
      for (int i = 0; i < M; ++i) {
        double x0 = static_cast<double>(i) / M, x1 = static_cast<double>(i + 1) / M;
        double inc = (x1 - x0) + a / (kTwoPi * mode) * (std::sin(kTwoPi * mode * x1) -
                                                        std::sin(kTwoPi * mode * x0));
        (*cdf)[i + 1] = (*cdf)[i] + std::max(0.0, inc);
      }
      sample = [&, cdf, M] {
        double u = unif(rng) * cdf->back();
        auto it = std::upper_bound(cdf->begin(), cdf->end(), u);
        long i = std::clamp<long>(static_cast<long>(it - cdf->begin()) - 1, 0, M - 1);
        double span = (*cdf)[i + 1] - (*cdf)[i];
        double f = span > 0.0 ? (u - (*cdf)[i]) / span : 0.5;
        return wrap01((i + f) / M);
      };
    } else {
      throw ConfigError("unknown yudovich profile type: " + type);
    }
    e.x.assign(N * d, 0.0);
    for (std::size_t p = 0; p < N; ++p) {
      double x0 = sample();
      e.x[p * d] = x0;
      for (int a = 1; a < d; ++a) e.x[p * d + a] = unif(rng);
      double th = theta(x0);
      if (!(th >= 0.0)) throw ConfigError("profile must be nonnegative");
      double R = std::isfinite(th) ? std::cbrt(th) : 0.0;
      // uniform in the d-ball of radius R
      if (d == 1) {
        e.v[p] = R * (2.0 * unif(rng) - 1.0);
      } else {
        double dir[3], s = 0.0;
        for (int a = 0; a < d; ++a) {
          dir[a] = normal(rng);
          s += dir[a] * dir[a];
        }
        s = std::sqrt(s);
        double rad = R * std::pow(unif(rng), 1.0 / d);
        for (int a = 0; a < d; ++a) e.v[p * d + a] = s > 0.0 ? rad * dir[a] / s : 0.0;
      }
    }
    e.wrap();
    return e;
  }

  throw ConfigError("unknown initial kind: " + kind);
}

}  // namespace kinwass
