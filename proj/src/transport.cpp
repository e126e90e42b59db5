#include "kinwass/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "kinwass/errors.hpp"
#include "kinwass/numeric.hpp"

namespace kinwass {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// |z|^p given |z|^2, avoiding pow for the common exponents.
inline double norm_pow(double sq, double p) {
  if (p == 2.0) return sq;
  if (p == 1.0) return std::sqrt(sq);
  return std::pow(sq, 0.5 * p);
}

inline double abs_pow(double a, double p) {
  if (p == 1.0) return a;
  if (p == 2.0) return a * a;
  return std::pow(a, p);
}

double log_sum_exp(const double* z, std::size_t n) {
  double m = -kInf;
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, z[i]);
  if (m == -kInf) return -kInf;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(z[i] - m);
  return m + std::log(s);
}

}  // namespace

// ---------------------------------------------------------------------------
// measures and costs

void EmpiricalMeasure::validate() const {
  if (d < 1) throw std::invalid_argument("measure dimension must be >= 1");
  const std::size_t n = w.size();
  if (n == 0) throw std::invalid_argument("measure has no particles");
  if (x.size() != n * d || v.size() != n * d)
    throw std::invalid_argument("measure coordinate arrays do not match N x d");
  CompensatedSum total;
  for (double wi : w) {
    if (!(wi >= 0.0)) throw std::invalid_argument("measure weights must be nonnegative");
    total.add(wi);
  }
  if (std::abs(total.value() - 1.0) > 1e-12)
    throw std::invalid_argument("measure weights must sum to 1");
  if (domain == Domain::Torus)
    for (double xi : x)
      if (!(xi >= 0.0 && xi < 1.0))
        throw std::invalid_argument("torus coordinates must lie in [0, 1)");
}

bool EmpiricalMeasure::equal_weights() const {
  if (w.empty()) return false;
  const double ref = 1.0 / static_cast<double>(w.size());
  for (double wi : w)
    if (std::abs(wi - ref) > 1e-15) return false;
  return true;
}

EmpiricalMeasure EmpiricalMeasure::positions_only() const {
  EmpiricalMeasure m = *this;
  std::fill(m.v.begin(), m.v.end(), 0.0);
  return m;
}

EmpiricalMeasure EmpiricalMeasure::uniform_weights(int d, Domain dom, std::vector<double> x,
                                                   std::vector<double> v) {
  EmpiricalMeasure m;
  m.d = d;
  m.domain = dom;
  m.x = std::move(x);
  m.v = std::move(v);
  const std::size_t n = m.x.size() / d;
  m.w.assign(n, 1.0 / static_cast<double>(n));
  return m;
}

double torus_delta(double a, double b) {
  double dlt = std::abs(a - b);
  dlt -= std::floor(dlt);
  return std::min(dlt, 1.0 - dlt);
}

PhaseCost phase_cost(const double* x, const double* v, const double* y, const double* w, int d,
                     double p, Domain dom) {
  PhaseCost c;
  if (d == 1) {
    double dx = dom == Domain::Torus ? torus_delta(x[0], y[0]) : std::abs(x[0] - y[0]);
    c.pos = abs_pow(dx, p);
    c.vel = abs_pow(std::abs(v[0] - w[0]), p);
    return c;
  }
  double sx = 0.0, sv = 0.0;
  for (int k = 0; k < d; ++k) {
    double dx = dom == Domain::Torus ? torus_delta(x[k], y[k]) : x[k] - y[k];
    double dv = v[k] - w[k];
    sx += dx * dx;
    sv += dv * dv;
  }
  c.pos = norm_pow(sx, p);
  c.vel = norm_pow(sv, p);
  return c;
}

PhaseCost phase_cost(const std::vector<double>& x, const std::vector<double>& v,
                     const std::vector<double>& y, const std::vector<double>& w, double p,
                     Domain dom) {
  if (x.size() != y.size() || v.size() != w.size() || x.size() != v.size())
    throw std::invalid_argument("phase_cost: dimension mismatch");
  return phase_cost(x.data(), v.data(), y.data(), w.data(), static_cast<int>(x.size()), p, dom);
}

void TransportPlan::recompute_costs(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  CompensatedSum cp, cv;
  for (const auto& e : pairs) {
    PhaseCost c = phase_cost(mu.xi(e.i), mu.vi(e.i), nu.xi(e.j), nu.vi(e.j), mu.d, p, mu.domain);
    cp.add(e.mass * c.pos);
    cv.add(e.mass * c.vel);
  }
  cost_pos = cp.value();
  cost_vel = cv.value();
}

double TransportPlan::marginal_error(const EmpiricalMeasure& mu,
                                     const EmpiricalMeasure& nu) const {
  std::vector<CompensatedSum> row(mu.size()), col(nu.size());
  for (const auto& e : pairs) {
    row.at(e.i).add(e.mass);
    col.at(e.j).add(e.mass);
  }
  double err = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i)
    err = std::max(err, std::abs(row[i].value() - mu.w[i]));
  for (std::size_t j = 0; j < nu.size(); ++j)
    err = std::max(err, std::abs(col[j].value() - nu.w[j]));
  return err;
}

// ---------------------------------------------------------------------------
// assignment: shortest augmenting path with potentials, costs on demand

std::vector<std::size_t> solve_assignment(
    std::size_t n, const std::function<double(std::size_t, std::size_t)>& c) {
  // 1-based arrays, column 0 is the virtual start
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      std::size_t i0 = match[j0], j1 = 0;
      double delta = kInf;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        double cur = c(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> row_to_col(n);
  for (std::size_t j = 1; j <= n; ++j) row_to_col[match[j] - 1] = j - 1;
  return row_to_col;
}

std::vector<std::size_t> circle_matching(const std::vector<double>& a,
                                         const std::vector<double>& b, double p) {
  const std::size_t n = a.size();
  if (b.size() != n) throw std::invalid_argument("circle_matching: size mismatch");
  std::vector<std::size_t> ia(n), ib(n);
  std::iota(ia.begin(), ia.end(), 0);
  std::iota(ib.begin(), ib.end(), 0);
  std::stable_sort(ia.begin(), ia.end(), [&](auto l, auto r) { return a[l] < a[r]; });
  std::stable_sort(ib.begin(), ib.end(), [&](auto l, auto r) { return b[l] < b[r]; });
  std::vector<double> sa(n), sb(n);
  for (std::size_t i = 0; i < n; ++i) {
    sa[i] = a[ia[i]];
    sb[i] = b[ib[i]];
  }
  std::size_t best_k = 0;
  double best = kInf;
  for (std::size_t k = 0; k < n; ++k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n && total < best; ++i) {
      std::size_t j = i + k < n ? i + k : i + k - n;
      total += abs_pow(torus_delta(sa[i], sb[j]), p);
    }
    if (total < best) {
      best = total;
      best_k = k;
    }
  }
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t j = i + best_k < n ? i + best_k : i + best_k - n;
    out[ia[i]] = ib[j];
  }
  return out;
}

namespace {

// Successive shortest paths on the dense bipartite transportation network.
TransportPlan min_cost_flow(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double p) {
  const std::size_t N = mu.size(), M = nu.size(), V = N + M;
  std::vector<double> cost(N * M);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < M; ++j) {
      PhaseCost c = phase_cost(mu.xi(i), mu.vi(i), nu.xi(j), nu.vi(j), mu.d, p, mu.domain);
      cost[i * M + j] = c.pos + c.vel;
    }
  std::vector<double> flow(N * M, 0.0), supply(mu.w), demand(nu.w), pot(V, 0.0), dist(V);
  std::vector<long> parent(V);
  std::vector<char> done(V);
  const double eps = 1e-15;

  auto open = [&](const std::vector<double>& m) {
    return std::any_of(m.begin(), m.end(), [&](double x) { return x > eps; });
  };

  while (open(supply) && open(demand)) {
    std::fill(dist.begin(), dist.end(), kInf);
    std::fill(parent.begin(), parent.end(), -1);
    std::fill(done.begin(), done.end(), 0);
    for (std::size_t i = 0; i < N; ++i)
      if (supply[i] > eps) dist[i] = 0.0;
    for (;;) {
      std::size_t u = V;
      double best = kInf;
      for (std::size_t k = 0; k < V; ++k)
        if (!done[k] && dist[k] < best) {
          best = dist[k];
          u = k;
        }
      if (u == V) break;
      done[u] = 1;
      if (u < N) {
        for (std::size_t j = 0; j < M; ++j) {
          if (done[N + j]) continue;
          double nd = dist[u] + cost[u * M + j] + pot[u] - pot[N + j];
          if (nd < dist[N + j]) {
            dist[N + j] = nd;
            parent[N + j] = static_cast<long>(u);
          }
        }
      } else {
        std::size_t j = u - N;
        for (std::size_t i = 0; i < N; ++i) {
          if (done[i] || flow[i * M + j] <= eps) continue;
          double nd = dist[u] - cost[i * M + j] + pot[u] - pot[i];
          if (nd < dist[i]) {
            dist[i] = nd;
            parent[i] = static_cast<long>(u);
          }
        }
      }
    }
    std::size_t sink = V;
    double best = kInf;
    for (std::size_t j = 0; j < M; ++j)
      if (demand[j] > eps && dist[N + j] < best) {
        best = dist[N + j];
        sink = N + j;
      }
    if (sink == V) throw std::runtime_error("min_cost_flow: no augmenting path");
    double maxd = 0.0;
    for (std::size_t k = 0; k < V; ++k)
      if (dist[k] < kInf) maxd = std::max(maxd, dist[k]);
    for (std::size_t k = 0; k < V; ++k) pot[k] += dist[k] < kInf ? dist[k] : maxd;

    // bottleneck along the path
    double delta = demand[sink - N];
    std::size_t node = sink;
    while (parent[node] >= 0) {
      std::size_t prev = static_cast<std::size_t>(parent[node]);
      if (prev >= N) delta = std::min(delta, flow[node * M + (prev - N)]);
      node = prev;
    }
    delta = std::min(delta, supply[node]);
    node = sink;
    while (parent[node] >= 0) {
      std::size_t prev = static_cast<std::size_t>(parent[node]);
      if (prev < N)
        flow[prev * M + (node - N)] += delta;
      else
        flow[node * M + (prev - N)] -= delta;
      node = prev;
    }
    supply[node] -= delta;
    demand[sink - N] -= delta;
  }

  TransportPlan plan;
  plan.p = p;
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < M; ++j)
      if (flow[i * M + j] > eps) plan.pairs.push_back({i, j, flow[i * M + j]});
  plan.recompute_costs(mu, nu);
  return plan;
}

bool zero_velocities(const EmpiricalMeasure& m) {
  return std::all_of(m.v.begin(), m.v.end(), [](double x) { return x == 0.0; });
}

void check_pair(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double p) {
  if (!(p >= 1.0)) throw std::domain_error("transport order p must be >= 1");
  mu.validate();
  nu.validate();
  if (mu.d != nu.d || mu.domain != nu.domain)
    throw std::invalid_argument("measures live on different phase spaces");
}

}  // namespace

OTResult wasserstein_p(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double p,
                       const ExactOptions& opt) {
  check_pair(mu, nu, p);
  TransportPlan plan;
  plan.p = p;
  const std::size_t n = mu.size();
  if (n == nu.size() && mu.equal_weights() && nu.equal_weights()) {
    if (n > opt.cap_equal)
      throw CapacityError("exact assignment capped at " + std::to_string(opt.cap_equal) +
                          " particles; use sinkhorn_wp");
    std::vector<std::size_t> match;
    if (mu.d == 1 && mu.domain == Domain::Torus && zero_velocities(mu) && zero_velocities(nu)) {
      match = circle_matching(mu.x, nu.x, p);
    } else {
      match = solve_assignment(n, [&](std::size_t i, std::size_t j) {
        PhaseCost c = phase_cost(mu.xi(i), mu.vi(i), nu.xi(j), nu.vi(j), mu.d, p, mu.domain);
        return c.pos + c.vel;
      });
    }
    for (std::size_t i = 0; i < n; ++i) plan.pairs.push_back({i, match[i], mu.w[i]});
    plan.recompute_costs(mu, nu);
  } else {
    if (mu.size() > opt.cap_general || nu.size() > opt.cap_general)
      throw CapacityError("exact min-cost flow capped at " + std::to_string(opt.cap_general) +
                          " particles; use sinkhorn_wp");
    plan = min_cost_flow(mu, nu, p);
  }
  OTResult r;
  r.plan = std::move(plan);
  r.value = std::pow(std::max(0.0, r.plan.cost()), 1.0 / p);
  return r;
}

// ---------------------------------------------------------------------------
// Sinkhorn

OTResult sinkhorn_wp(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double p,
                     const SinkhornOptions& opt) {
  check_pair(mu, nu, p);
  const std::size_t N = mu.size(), M = nu.size();
  std::vector<double> C(N * M);
  double cmax = 0.0;
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < M; ++j) {
      PhaseCost c = phase_cost(mu.xi(i), mu.vi(i), nu.xi(j), nu.vi(j), mu.d, p, mu.domain);
      C[i * M + j] = c.pos + c.vel;
      cmax = std::max(cmax, C[i * M + j]);
    }
  std::vector<double> sched = opt.eps_schedule;
  if (sched.empty())
    for (double e = 1e-1; e > 0.9e-5; e *= 0.5) sched.push_back(e);
  for (std::size_t k = 0; k < sched.size(); ++k) {
    if (!(sched[k] > 0.0)) throw std::invalid_argument("sinkhorn: epsilon must be > 0");
    if (k > 0 && !(sched[k] < sched[k - 1]))
      throw std::invalid_argument("sinkhorn: epsilon schedule must be strictly decreasing");
  }
  const double scale = cmax > 0.0 ? cmax : 1.0;

  std::vector<double> loga(N), logb(M);
  for (std::size_t i = 0; i < N; ++i) loga[i] = std::log(mu.w[i]);
  for (std::size_t j = 0; j < M; ++j) logb[j] = std::log(nu.w[j]);
  std::vector<double> f(N, 0.0), g(M, 0.0), buf(std::max(N, M));

  // Stabilized scaling iterations: the kernel carries the current potentials
  // and the scalings are absorbed into them whenever they grow large.
  std::vector<double> K(N * M), ua(N), ub(M);
  auto rebuild = [&](double e) {
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < M; ++j) K[i * M + j] = std::exp((f[i] + g[j] - C[i * M + j]) / e);
    std::fill(ua.begin(), ua.end(), 1.0);
    std::fill(ub.begin(), ub.end(), 1.0);
  };
  auto absorb = [&](double e) {
    for (std::size_t i = 0; i < N; ++i) f[i] += e * std::log(ua[i]);
    for (std::size_t j = 0; j < M; ++j) g[j] += e * std::log(ub[j]);
    rebuild(e);
  };
  auto log_update = [&](double e) {
    for (std::size_t j = 0; j < M; ++j) {
      for (std::size_t i = 0; i < N; ++i) buf[i] = (f[i] - C[i * M + j]) / e;
      g[j] = e * (logb[j] - log_sum_exp(buf.data(), N));
    }
    for (std::size_t i = 0; i < N; ++i) {
      for (std::size_t j = 0; j < M; ++j) buf[j] = (g[j] - C[i * M + j]) / e;
      f[i] = e * (loga[i] - log_sum_exp(buf.data(), M));
    }
    rebuild(e);
  };
  std::vector<double> colsum(M);

  double eps = 0.0, residual = kInf;
  std::vector<double> kept_f, kept_g;
  double kept_eps = 0.0;
  for (std::size_t stage = 0; stage < sched.size(); ++stage) {
    eps = sched[stage] * scale;
    const bool last = stage + 1 == sched.size();
    residual = kInf;
    log_update(eps);
    // every stage warm-starts the next and may serve as the fallback
    const int cap = opt.max_iter;
    for (int it = 0; it < cap; ++it) {
      bool bad = false;
      std::fill(colsum.begin(), colsum.end(), 0.0);
      for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < M; ++j) colsum[j] += K[i * M + j] * ua[i];
      for (std::size_t j = 0; j < M; ++j) {
        if (!(colsum[j] > 0.0) || !std::isfinite(colsum[j])) bad = true;
        ub[j] = nu.w[j] / colsum[j];
      }
      if (!bad)
        for (std::size_t i = 0; i < N; ++i) {
          double r = 0.0;
          for (std::size_t j = 0; j < M; ++j) r += K[i * M + j] * ub[j];
          if (!(r > 0.0) || !std::isfinite(r)) bad = true;
          ua[i] = mu.w[i] / r;
        }
      if (bad) {
        log_update(eps);
        continue;
      }
      double big = 0.0;
      for (double x : ua) big = std::max(big, std::abs(std::log(x)));
      for (double x : ub) big = std::max(big, std::abs(std::log(x)));
      if (it % 10 == 9 || it + 1 == cap) {
        // rows are exact after the ua update, so the defect sits in the columns
        std::fill(colsum.begin(), colsum.end(), 0.0);
        for (std::size_t i = 0; i < N; ++i)
          for (std::size_t j = 0; j < M; ++j) colsum[j] += K[i * M + j] * ua[i] * ub[j];
        residual = 0.0;
        for (std::size_t j = 0; j < M; ++j) residual += std::abs(colsum[j] - nu.w[j]);
        if (residual <= opt.tol) break;
      }
      if (big > 30.0) absorb(eps);
    }
    absorb(eps);
    if (residual <= opt.tol) {
      kept_f = f;
      kept_g = g;
      kept_eps = eps;
    } else if (last) {
      // fall back to the finest stage that converged; rounding keeps the plan feasible
      if (kept_eps == 0.0)
        throw SinkhornError("sinkhorn did not reach the marginal tolerance", residual);
      f = kept_f;
      g = kept_g;
      eps = kept_eps;
    }
  }

  // round onto the transport polytope
  std::vector<double> P(N * M);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < M; ++j) P[i * M + j] = std::exp((f[i] + g[j] - C[i * M + j]) / eps);
  for (std::size_t i = 0; i < N; ++i) {
    double r = 0.0;
    for (std::size_t j = 0; j < M; ++j) r += P[i * M + j];
    double s = r > mu.w[i] ? mu.w[i] / r : 1.0;
    for (std::size_t j = 0; j < M; ++j) P[i * M + j] *= s;
  }
  for (std::size_t j = 0; j < M; ++j) {
    double c = 0.0;
    for (std::size_t i = 0; i < N; ++i) c += P[i * M + j];
    double s = c > nu.w[j] ? nu.w[j] / c : 1.0;
    for (std::size_t i = 0; i < N; ++i) P[i * M + j] *= s;
  }
  std::vector<double> er(N), ec(M);
  double ec_total = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    CompensatedSum r;
    for (std::size_t j = 0; j < M; ++j) r.add(P[i * M + j]);
    er[i] = std::max(0.0, mu.w[i] - r.value());
  }
  for (std::size_t j = 0; j < M; ++j) {
    CompensatedSum c;
    for (std::size_t i = 0; i < N; ++i) c.add(P[i * M + j]);
    ec[j] = std::max(0.0, nu.w[j] - c.value());
    ec_total += ec[j];
  }
  if (ec_total > 0.0)
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < M; ++j) P[i * M + j] += er[i] * ec[j] / ec_total;

  TransportPlan plan;
  plan.p = p;
  plan.approximate = true;
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < M; ++j)
      if (P[i * M + j] > 0.0) plan.pairs.push_back({i, j, P[i * M + j]});
  plan.recompute_costs(mu, nu);

  // c-transform of f gives a feasible dual point, hence a lower bound
  CompensatedSum dual;
  for (std::size_t i = 0; i < N; ++i) dual.add(mu.w[i] * f[i]);
  for (std::size_t j = 0; j < M; ++j) {
    double gj = kInf;
    for (std::size_t i = 0; i < N; ++i) gj = std::min(gj, C[i * M + j] - f[i]);
    dual.add(nu.w[j] * gj);
  }
  plan.gap = std::max(0.0, plan.cost() - dual.value());

  OTResult r;
  r.plan = std::move(plan);
  r.value = std::pow(std::max(0.0, r.plan.cost()), 1.0 / p);
  return r;
}

// ---------------------------------------------------------------------------
// pushforward

PhaseCost pushforward_costs(const TransportPlan& plan0, const EmpiricalMeasure& f1_t,
                            const EmpiricalMeasure& f2_t, double p) {
  if (f1_t.d != f2_t.d) throw std::invalid_argument("pushforward: dimension mismatch");
  CompensatedSum cp, cv;
  for (const auto& e : plan0.pairs) {
    if (e.i >= f1_t.size() || e.j >= f2_t.size())
      throw std::out_of_range("pushforward: plan index outside the evolved ensembles");
    PhaseCost c =
        phase_cost(f1_t.xi(e.i), f1_t.vi(e.i), f2_t.xi(e.j), f2_t.vi(e.j), f1_t.d, p, f1_t.domain);
    cp.add(e.mass * c.pos);
    cv.add(e.mass * c.vel);
  }
  return {cp.value(), cv.value()};
}

PhaseCost pushforward_costs(const TransportPlan& plan0, const EmpiricalMeasure& mu0,
                            const EmpiricalMeasure& nu0, const Flow& flow1, const Flow& flow2,
                            double t, double p) {
  const int d = mu0.d;
  std::vector<double> x1(d), v1(d), x2(d), v2(d);
  CompensatedSum cp, cv;
  for (const auto& e : plan0.pairs) {
    if (e.i >= mu0.size() || e.j >= nu0.size())
      throw std::out_of_range("pushforward: plan index outside the initial measures");
    std::copy(mu0.xi(e.i), mu0.xi(e.i) + d, x1.begin());
    std::copy(mu0.vi(e.i), mu0.vi(e.i) + d, v1.begin());
    std::copy(nu0.xi(e.j), nu0.xi(e.j) + d, x2.begin());
    std::copy(nu0.vi(e.j), nu0.vi(e.j) + d, v2.begin());
    flow1(e.i, t, x1.data(), v1.data());
    flow2(e.j, t, x2.data(), v2.data());
    PhaseCost c = phase_cost(x1.data(), v1.data(), x2.data(), v2.data(), d, p, mu0.domain);
    cp.add(e.mass * c.pos);
    cv.add(e.mass * c.vel);
  }
  return {cp.value(), cv.value()};
}

TransportPlan diagonal_plan(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double p) {
  if (mu.size() != nu.size()) throw std::invalid_argument("diagonal_plan: size mismatch");
  TransportPlan plan;
  plan.p = p;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (std::abs(mu.w[i] - nu.w[i]) > 1e-15)
      throw std::invalid_argument("diagonal_plan: weights differ");
    plan.pairs.push_back({i, i, mu.w[i]});
  }
  plan.recompute_costs(mu, nu);
  return plan;
}

}  // namespace kinwass
