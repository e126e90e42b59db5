#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include <nlohmann/json.hpp>

#include "kinwass/growth.hpp"
#include "kinwass/transport.hpp"

namespace kinwass {

/// Equal-role particles on the unit torus. Coordinates are row-major N x d.
struct ParticleEnsemble {
  int d = 1;
  int sigma = -1;  // +1 gravitational, -1 electrostatic
  std::vector<double> x;
  std::vector<double> v;
  std::vector<double> w;

  std::size_t size() const { return w.size(); }
  void wrap();
  EmpiricalMeasure measure() const;
};

/// Grid quantities on n^d nodes, last axis fastest. Node j sits at j / n.
struct FieldState {
  int d = 1;
  int grid_n = 0;
  std::vector<double> rho;    // mean one
  std::vector<double> U;      // potential
  std::vector<double> gradU;  // d blocks of n^d values
  double t = 0.0;

  std::size_t cells() const { return rho.size(); }
};

std::size_t grid_cells(int d, int n);

// Cloud-in-cell deposit scaled so the grid mean is 1.
std::vector<double> deposit(const ParticleEnsemble& ens, int grid_n);
std::vector<double> deposit(int d, const std::vector<double>& x, const std::vector<double>& w,
                            int grid_n);

// Cloud-in-cell interpolation of a grid block at a point.
double interpolate(const double* grid, int d, int n, const double* x);

/// Spectral solver for sigma Laplace(U) = rho - 1 on the torus.
class PoissonSolver {
 public:
  PoissonSolver(int d, int grid_n);
  ~PoissonSolver();
  PoissonSolver(const PoissonSolver&) = delete;
  PoissonSolver& operator=(const PoissonSolver&) = delete;

  int d() const { return d_; }
  int grid_n() const { return n_; }

  // Fills U and gradU of out; rho must have mean 1 within 1e-10.
  void solve(const std::vector<double>& rho, int sigma, FieldState& out);
  // max |sigma Laplace(U) - (rho - 1)| with a spectral Laplacian.
  double residual(const FieldState& f, int sigma);

 private:
  struct Impl;
  int d_, n_;
  std::unique_ptr<Impl> impl_;
};

struct MagneticField {
  std::function<std::array<double, 3>(double t, const double* x)> B;
  double sup_norm = 0.0;
  double loglip_const = 0.0;  // C_B
  nlohmann::json description;

  static MagneticField uniform(std::array<double, 3> b);
  bool is_zero() const { return sup_norm == 0.0; }
  // Largest sampled |B| over a space-time grid.
  double sampled_sup(int d, double T, int n_space = 16, int n_time = 8) const;
};

// max over the grid of |gradU| (Euclidean norm across axes).
double max_force(const FieldState& f);

class Simulation {
 public:
  Simulation(ParticleEnsemble ens, int grid_n, double c_cfl = 0.5);

  const ParticleEnsemble& ensemble() const { return ens_; }
  const FieldState& field() const { return field_; }
  double time() const { return field_.t; }
  PoissonSolver& solver() { return solver_; }

  // Kick-drift-kick step of the characteristics. Throws CflError.
  void step_vp(double dt);
  // Symmetric split with a Boris rotation for V ^ B; d must be 2 or 3.
  void step_vpb(const MagneticField& B, double dt);
  // Largest admissible dt under the configured CFL rule, with the limiting particle.
  std::pair<double, std::size_t> cfl_limit() const;

  double kinetic_energy() const;
  double field_energy() const;  // -(sigma/2) int |grad U|^2
  double energy() const { return kinetic_energy() + field_energy(); }
  std::vector<double> momentum() const;

 private:
  void refresh_field();
  void kick(double h);
  void drift(double h);
  void rotate(const MagneticField& B, double t, double h);
  void check_cfl(double dt) const;

  ParticleEnsemble ens_;
  PoissonSolver solver_;
  FieldState field_;
  double c_cfl_;
  std::vector<double> acc_;
};

// Boris rotation of one velocity for v' = v ^ B over h; |v| is preserved.
void boris_rotate(int d, double* v, const std::array<double, 3>& B, double h);

struct NormResult {
  double value = 0.0;
  double attained_r = 1.0;
};

// 1, sqrt 2, 2, ... up to 4096.
std::vector<double> default_r_grid();
// max_r ||rho||_{L^r(T^d)} / Theta(r) with grid quadrature.
NormResult yudovich_norm(const std::vector<double>& rho, const GrowthFunction& gf,
                         const std::vector<double>& r_grid);
// max_r (sum w |v|^r)^{1/r} / Thetabar(r).
NormResult moment_yudovich_norm(const ParticleEnsemble& ens, const GrowthFunction& gf_bar,
                                const std::vector<double>& r_grid);
// ||h||_{L^r} on the grid, r = inf allowed.
double grid_lp_norm(const std::vector<double>& h, double r);

struct ForceProbe {
  double modulus_ratio = 0.0;  // max |gradU(x) - gradU(y)| / phi_Theta(|x - y|)
  double sup_ratio = 0.0;      // ||gradU||_inf / (1 + Yudovich norm)
  double slope = 0.0;          // regression slope of log ratio against log |x - y|
  std::size_t pairs = 0;
  nlohmann::json to_json() const;
};

ForceProbe force_regularity_probe(const FieldState& field, const GrowthFunction& gf, int d,
                                  std::size_t n_pairs, std::uint64_t seed,
                                  const std::vector<double>& r_grid = default_r_grid());

// kinds: uniform_perturbed, two_stream, yudovich_datum.
ParticleEnsemble make_initial(const std::string& kind, const nlohmann::json& params, int d,
                              std::size_t N, std::uint64_t seed, int sigma = -1);

}  // namespace kinwass
