#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace kinwass {

enum class Domain { Torus, Euclidean };

/// Weighted particle cloud on X x R^d. Coordinates are row-major N x d.
struct EmpiricalMeasure {
  int d = 1;
  Domain domain = Domain::Torus;
  std::vector<double> x;
  std::vector<double> v;
  std::vector<double> w;

  std::size_t size() const { return w.size(); }
  const double* xi(std::size_t i) const { return x.data() + i * d; }
  const double* vi(std::size_t i) const { return v.data() + i * d; }

  // Throws std::invalid_argument when shapes, weights or torus range are off.
  void validate() const;
  bool equal_weights() const;
  // Spatial marginal: same positions, zero velocities.
  EmpiricalMeasure positions_only() const;

  static EmpiricalMeasure uniform_weights(int d, Domain dom, std::vector<double> x,
                                          std::vector<double> v);
};

struct PhaseCost {
  double pos = 0.0;  // dist(x, y)^p
  double vel = 0.0;  // |v - w|^p
};

double torus_delta(double a, double b);
PhaseCost phase_cost(const double* x, const double* v, const double* y, const double* w, int d,
                     double p, Domain dom);
PhaseCost phase_cost(const std::vector<double>& x, const std::vector<double>& v,
                     const std::vector<double>& y, const std::vector<double>& w, double p,
                     Domain dom);

struct PlanEntry {
  std::size_t i = 0;
  std::size_t j = 0;
  double mass = 0.0;
};

struct TransportPlan {
  std::vector<PlanEntry> pairs;
  double cost_pos = 0.0;
  double cost_vel = 0.0;
  double p = 1.0;
  bool approximate = false;
  double gap = 0.0;  // certified bound on cost - optimal cost (Sinkhorn only)

  double cost() const { return cost_pos + cost_vel; }
  // Recomputes cost_pos / cost_vel from the pairs with compensated sums.
  void recompute_costs(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu);
  // Max absolute marginal defect against the two weight vectors.
  double marginal_error(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) const;
};

struct OTResult {
  double value = 0.0;  // W_p, the p-th root of the plan cost
  TransportPlan plan;
};

struct ExactOptions {
  std::size_t cap_equal = 4096;
  std::size_t cap_general = 512;
};

OTResult wasserstein_p(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double p,
                       const ExactOptions& opt = {});

// Building blocks exposed for tests and callers with special structure.
// Optimal assignment for an n x n cost given as a callable.
std::vector<std::size_t> solve_assignment(std::size_t n,
                                          const std::function<double(std::size_t, std::size_t)>& c);
// Equal-weight matching of points on the unit circle, cost min(|dx|, 1-|dx|)^p.
std::vector<std::size_t> circle_matching(const std::vector<double>& a,
                                         const std::vector<double>& b, double p);

struct SinkhornOptions {
  std::vector<double> eps_schedule;  // relative to max cost; empty means default
  int max_iter = 20000;
  double tol = 1e-6;  // L1 marginal residual before rounding
};

OTResult sinkhorn_wp(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double p,
                     const SinkhornOptions& opt = {});

// Costs of the pushforward coupling: pairs of plan0 evaluated at time-t states
// whose particle indices match mu0 / nu0.
PhaseCost pushforward_costs(const TransportPlan& plan0, const EmpiricalMeasure& f1_t,
                            const EmpiricalMeasure& f2_t, double p);

// Flow given as a callable mapping (particle index, t) to the state at t.
using Flow = std::function<void(std::size_t i, double t, double* x, double* v)>;
PhaseCost pushforward_costs(const TransportPlan& plan0, const EmpiricalMeasure& mu0,
                            const EmpiricalMeasure& nu0, const Flow& flow1, const Flow& flow2,
                            double t, double p);

// Diagonal coupling i <-> i of two equal-size equal-weight measures.
TransportPlan diagonal_plan(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double p);

}  // namespace kinwass
