#include "kinwass/cli.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "kinwass/config.hpp"
#include "kinwass/errors.hpp"
#include "kinwass/growth.hpp"
#include "kinwass/numeric.hpp"
#include "kinwass/report.hpp"
#include "kinwass/stability.hpp"
#include "kinwass/transport.hpp"
#include "kinwass/vlasov.hpp"

namespace kinwass {

namespace {

// Raised by subcommands whose checks fail after artifacts are written.
struct Outcome {
  bool ok = true;
};

nlohmann::json section(const nlohmann::json& root, const char* key) {
  if (!root.contains(key)) return nlohmann::json::object();
  const auto& s = root.at(key);
  if (!s.is_object()) throw ConfigError(std::string("[") + key + "] must be a table");
  return s;
}

void check_top_level(const nlohmann::json& root, std::initializer_list<const char*> allowed) {
  if (!root.is_object()) throw ConfigError("config root must be a table");
  for (auto it = root.begin(); it != root.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) ok = ok || it.key() == k;
    if (!ok) throw ConfigError("unknown config section '" + it.key() + "'");
  }
}

struct Common {
  std::string config;
  std::string out;
  std::optional<long long> seed;
  int threads = 0;
};

nlohmann::json load_with_seed(const Common& c) {
  nlohmann::json root = load_config_file(c.config);
  if (c.seed) {
    if (*c.seed < 0) throw ConfigError("--seed must be >= 0");
    if (!root.contains("simulation")) root["simulation"] = nlohmann::json::object();
    root["simulation"]["seed"] = *c.seed;
  }
  return root;
}

std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------------------

Outcome cmd_verify_growth(const std::string& family, double alpha, int n, double p, int d,
                          int grid, const std::string& out_dir, std::ostream& out) {
  GrowthFunction gf;
  if (family == "bounded")
    gf = GrowthFunction::bounded();
  else if (family == "orlicz")
    gf = GrowthFunction::orlicz(alpha);
  else if (family == "iterlog")
    gf = GrowthFunction::iterlog(n);
  else
    throw ConfigError("unknown family '" + family + "' (bounded, orlicz, iterlog)");
  GrowthConstants k = paper_constants(gf, p, d);
  AssumptionReport rep = verify_assumptions(gf, p, d, k, grid);
  nlohmann::json params{{"family", gf.to_json()}, {"p", p}, {"d", d}, {"grid", grid}};
  nlohmann::json j{{"config_hash", config_hash(params)},
                   {"seed", 0},
                   {"parameters", params},
                   {"constants",
                    {{"c_small", k.c_small}, {"C_log", k.C_log}, {"C_bar", k.C_bar},
                     {"C_phi", k.C_phi}}},
                   {"report", rep.to_json()},
                   {"all_pass", rep.all_pass()}};
  out << dump(j);
  if (!out_dir.empty()) {
    RunDirectory rd(out_dir);
    rd.write("verify_growth.json", dump(j));
    rd.commit();
  }
  return {rep.all_pass()};
}

// Minimum over all permutations of an equal-weight assignment cost.
double brute_force(const EmpiricalMeasure& a, const EmpiricalMeasure& b, double p) {
  std::vector<std::size_t> perm(a.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = INFINITY;
  do {
    CompensatedSum s;
    for (std::size_t i = 0; i < perm.size(); ++i) {
      PhaseCost c = phase_cost(a.xi(i), a.vi(i), b.xi(perm[i]), b.vi(perm[i]), a.d, p, a.domain);
      s.add(a.w[i] * (c.pos + c.vel));
    }
    best = std::min(best, s.value());
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

EmpiricalMeasure random_measure(std::mt19937_64& rng, int d, std::size_t N, bool velocities) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> x(N * d), v(N * d, 0.0);
  for (auto& e : x) e = u(rng);
  if (velocities)
    for (auto& e : v) e = g(rng);
  return EmpiricalMeasure::uniform_weights(d, Domain::Torus, std::move(x), std::move(v));
}

Outcome cmd_ot_selftest(int trials, std::uint64_t seed, int sink_n, const std::string& out_dir,
                        std::ostream& out) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> nd(2, 7), dd(1, 2), pd(1, 2);
  int mismatches = 0;
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    int N = nd(rng), d = dd(rng);
    double p = pd(rng);
    bool vel = t % 3 != 0;
    auto a = random_measure(rng, d, N, vel), b = random_measure(rng, d, N, vel);
    double exact = wasserstein_p(a, b, p).plan.cost();
    double brute = brute_force(a, b, p);
    double err = std::abs(exact - brute) / std::max(1.0, brute);
    worst = std::max(worst, err);
    if (err > 1e-12) ++mismatches;
  }
  auto a = random_measure(rng, 1, sink_n, true), b = random_measure(rng, 1, sink_n, true);
  double exact = wasserstein_p(a, b, 2.0).value;
  OTResult s = sinkhorn_wp(a, b, 2.0);
  double rel = std::abs(s.value - exact) / exact;
  bool ok = mismatches == 0 && rel <= 0.02;
  nlohmann::json params{{"trials", trials}, {"seed", seed}, {"sinkhorn_n", sink_n}};
  nlohmann::json j{{"config_hash", config_hash(params)},
                   {"seed", seed},
                   {"parameters", params},
                   {"exact_vs_bruteforce", {{"mismatches", mismatches}, {"worst_rel_err", worst}}},
                   {"sinkhorn",
                    {{"exact_Wp", exact},
                     {"sinkhorn_Wp", s.value},
                     {"rel_err", rel},
                     {"gap", s.plan.gap}}},
                   {"pass", ok}};
  out << dump(j);
  if (!out_dir.empty()) {
    RunDirectory rd(out_dir);
    rd.write("ot_selftest.json", dump(j));
    rd.commit();
  }
  return {ok};
}

Outcome cmd_simulate(const Common& c, std::ostream& out) {
  nlohmann::json root = load_with_seed(c);
  check_top_level(root, {"simulation", "bounds"});
  SimConfig sim = SimConfig::from_json(section(root, "simulation"));
  if (sim.free_streaming) throw ConfigError("free_streaming applies to twin runs only");
  GrowthFunction gf = GrowthFunction::bounded();
  if (root.contains("bounds") && root["bounds"].contains("growth"))
    gf = GrowthFunction::from_json(root["bounds"]["growth"]);
  const std::string hash = config_hash(root);
  auto B = sim.magnetic();

  Simulation s(make_initial(sim.initial_kind, sim.initial, sim.d, sim.N, sim.seed, sim.sigma),
               sim.grid_n, sim.c_cfl);
  std::vector<std::string> cols{"t", "kinetic", "field", "energy"};
  for (int a = 0; a < sim.d; ++a) cols.push_back("momentum_" + std::to_string(a + 1));
  cols.push_back("max_force");
  cols.push_back("yudovich");
  if (B) cols.push_back("vbound_excess");
  std::vector<std::vector<double>> rows;
  auto record = [&](const Simulation& S) {
    std::vector<double> r{S.time(), S.kinetic_energy(), S.field_energy(), S.energy()};
    for (double m : S.momentum()) r.push_back(m);
    r.push_back(max_force(S.field()));
    r.push_back(yudovich_norm(S.field().rho, gf, default_r_grid()).value);
    rows.push_back(std::move(r));
  };
  bool ok = true;
  if (B) {
    VelocityBoundTrace tr =
        run_velocity_bound(s, *B, sim.dt, sim.steps(), sim.output_every, record);
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i].push_back(tr.max_excess[i]);
    ok = tr.holds;
  } else {
    for (int k = 0; k <= sim.steps(); ++k) {
      if (k > 0) s.step_vp(sim.dt);
      if (k % sim.output_every == 0 || k == sim.steps()) record(s);
    }
  }
  double e0 = rows.front()[3], e1 = rows.back()[3];
  nlohmann::json j{{"config_hash", hash},
                   {"seed", sim.seed},
                   {"config", root},
                   {"energy_drift", e1 - e0},
                   {"energy_rel_drift", e0 != 0.0 ? (e1 - e0) / std::abs(e0) : 0.0},
                   {"magnetized", B.has_value()},
                   {"velocity_bound_ok", ok}};
  Panel pe{"energy", "t", "energy", false, {}};
  std::vector<double> t, ke, fe, te, yn;
  for (const auto& r : rows) {
    t.push_back(r[0]);
    ke.push_back(r[1]);
    fe.push_back(r[2]);
    te.push_back(r[3]);
    yn.push_back(r[4 + sim.d + 1]);
  }
  pe.series = {{"kinetic", t, ke, false}, {"field", t, fe, false}, {"total", t, te, true}};
  Panel py{"Yudovich norm of rho", "t", "norm", false, {{"rho", t, yn, false}}};
  RunDirectory rd(c.out);
  rd.write("simulate.csv", table_csv(cols, rows, hash, sim.seed));
  rd.write("simulate.json", dump(j));
  rd.write("simulate.svg", render_svg({pe, py}, "config " + hash + "  seed " +
                                                    std::to_string(sim.seed)));
  rd.commit();
  out << dump(j);
  return {ok};
}

Outcome cmd_twin(const Common& c, bool magnetized, std::ostream& out) {
  nlohmann::json root = load_with_seed(c);
  check_top_level(root, {"simulation", "bounds", "perturbation", "twin"});
  SimConfig sim = SimConfig::from_json(section(root, "simulation"));
  if (magnetized) {
    if (sim.B.is_null()) throw ConfigError("vpb-twin needs a [simulation.B] table");
    if (sim.d != 2 && sim.d != 3) throw ConfigError("vpb-twin needs d = 2 or d = 3");
    if (!section(root, "bounds").contains("growth_bar"))
      throw ConfigError("vpb-twin needs bounds.growth_bar");
  } else if (!sim.B.is_null()) {
    throw ConfigError("twin runs the unmagnetized system; use vpb-twin for a B field");
  }
  BoundConfig bc = BoundConfig::from_json(section(root, "bounds"), sim.d);
  Perturbation pert = Perturbation::from_json(root.value("perturbation", nlohmann::json()));
  nlohmann::json tw = section(root, "twin");
  for (auto it = tw.begin(); it != tw.end(); ++it)
    if (it.key() != "exact_cap") throw ConfigError("unknown [twin] key '" + it.key() + "'");
  TwinOptions opt;
  int cap = get_int(tw, "exact_cap", static_cast<int>(opt.exact_cap));
  if (cap < 1) throw ConfigError("twin.exact_cap must be >= 1");
  opt.exact_cap = static_cast<std::size_t>(cap);
  opt.threads = resolve_threads(c.threads);

  StabilityReport rep = run_twin_experiment(bc, sim, pert, opt);
  rep.metadata["config_hash"] = config_hash(root);
  rep.metadata["config"] = root;
  bool ok = rep.control_ok() && (!magnetized || rep.velocity_bound_ok);
  rep.metadata["pass"] = ok;

  RunDirectory rd(c.out);
  rd.write("stability.csv", rep.to_csv());
  rd.write("stability.json", dump(rep.metadata));
  rd.write("stability.svg", stability_svg(rep, bc.p));
  rd.commit();
  nlohmann::json summary{{"config_hash", rep.metadata["config_hash"]},
                         {"seed", sim.seed},
                         {"rows", rep.rows.size()},
                         {"control_ok", rep.control_ok()},
                         {"velocity_bound_ok", rep.velocity_bound_ok},
                         {"kappa", rep.kappa},
                         {"pass", ok}};
  out << dump(summary);
  return {ok};
}

Outcome cmd_bounds(const Common& c, std::ostream& out) {
  nlohmann::json root = load_with_seed(c);
  check_top_level(root, {"bounds", "curve", "simulation"});
  nlohmann::json cv = section(root, "curve");
  for (auto it = cv.begin(); it != cv.end(); ++it) {
    static const char* known[] = {"W0pp", "J", "A", "T", "samples", "d"};
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw ConfigError("unknown [curve] key '" + it.key() + "'");
  }
  int d = get_int(cv, "d", 1);
  BoundConfig bc = BoundConfig::from_json(section(root, "bounds"), d);
  if (!cv.contains("W0pp")) throw ConfigError("[curve] needs W0pp");
  double W0 = get_number(cv, "W0pp", 0.0);
  if (!(W0 > 0.0)) throw ConfigError("curve.W0pp must be > 0");
  double J = cv.contains("J") ? get_number(cv, "J", 1.0) : J_of_t(bc, get_number(cv, "A", 1.0));
  if (!(J > 0.0)) throw ConfigError("curve.J must be > 0");
  int n = get_int(cv, "samples", 41);
  if (n < 2) throw ConfigError("curve.samples must be >= 2");

  double budget = admissible_budget(W0, bc);
  double horizon = budget / J;
  double T = get_number(cv, "T", 1.2 * horizon);
  const std::string hash = config_hash(root);
  const bool shared = bc.gf.family() == Family::Bounded || bc.gf.family() == Family::Orlicz;
  const bool closed = bc.gf.family() != Family::Table && !bc.gf_bar;

  std::vector<std::vector<double>> rows;
  std::vector<double> ts, bs, cps, ces;
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    double t = T * i / (n - 1), Jint = J * t;
    bool adm = Jint <= budget;
    double b = NAN, cp = NAN, ce = NAN;
    if (adm) {
      b = bound_value(W0, Jint, bc);
      if (closed) {
        try {
          cp = closed_form_bound(bc.gf, W0, Jint, bc.p, Adjust::Paper, &bc.consts);
        } catch (const RegimeError&) {
        }
        ce = closed_form_bound(bc.gf, W0, Jint, bc.p, Adjust::ExactInverse, &bc.consts);
        if (shared && b > 0.0) worst = std::max(worst, std::abs(ce - b) / b);
      }
    }
    rows.push_back({t, Jint, b, cp, ce, adm ? 1.0 : 0.0});
    ts.push_back(t);
    bs.push_back(b);
    cps.push_back(cp);
    ces.push_back(ce);
  }
  // Osgood cross-check with H = J on the admissible samples
  GrowthConstants k = bc.consts;
  GrowthFunction g = bc.gf;
  if (bc.gf_bar) {
    g = *bc.gf_bar;
    k = paper_constants(g, bc.p, d);
  }
  double G0 = std::exp(-phi_inv_log(g, bc.p, k, std::log(W0)));
  std::vector<double> samples;
  for (double t : ts)
    if (t > 0.0) samples.push_back(t);
  OsgoodReport os = osgood_check(
      g, bc.p, k, G0, [J](double) { return J; }, samples, [J](double t) { return J * t; });

  bool ok = os.pass && (!shared || worst <= 1e-6);
  nlohmann::json j{{"config_hash", hash},
                   {"seed", 0},
                   {"config", root},
                   {"bound_config", bc.to_json()},
                   {"J", J},
                   {"budget", budget},
                   {"horizon", horizon},
                   {"closed_form_max_rel_diff", shared ? nlohmann::json(worst) : nlohmann::json()},
                   {"osgood", {{"pass", os.pass}, {"max_rel_err", os.max_rel_err},
                               {"blowup", os.blowup}, {"horizon", os.horizon}}},
                   {"pass", ok}};
  Panel P{"bound curve", "t", "log10 W_p^p bound", true, {}};
  P.series = {{"Psi composition", ts, bs, false},
              {"closed form (paper adjust)", ts, cps, true},
              {"closed form (exact inverse)", ts, ces, true}};
  RunDirectory rd(c.out);
  rd.write("bounds.csv", table_csv({"t", "Jint", "bound", "closed_paper", "closed_exact",
                                    "admissible"},
                                   rows, hash, 0));
  rd.write("bounds.json", dump(j));
  rd.write("bounds.svg", render_svg({P}, "config " + hash));
  rd.commit();
  out << dump(j);
  return {ok};
}

void add_common(CLI::App* sc, Common& c, bool with_threads) {
  sc->add_option("--config", c.config, "TOML or JSON configuration")->required();
  sc->add_option("--out", c.out, "output directory")->required();
  sc->add_option("--seed", c.seed, "overrides simulation.seed");
  if (with_threads)
    sc->add_option("--threads", c.threads, "worker threads (default: KINWASS_THREADS or 1)")
        ->check(CLI::Range(1, 1024));
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Kinetic Wasserstein stability laboratory", "kinwass"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "all subcommands");

  std::string family = "bounded", vg_out;
  double alpha = 1.0, p = 1.0;
  int n = 1, d = 1, grid = 10000;
  auto* vg = app.add_subcommand("verify-growth", "check the growth-function assumptions");
  vg->add_option("--family", family, "bounded | orlicz | iterlog");
  vg->add_option("--alpha", alpha, "Orlicz exponent");
  vg->add_option("--n", n, "iterated-log depth");
  vg->add_option("--p", p, "transport order");
  vg->add_option("--d", d, "dimension");
  vg->add_option("--grid", grid, "log-grid size")->check(CLI::Range(10, 10000000));
  vg->add_option("--out", vg_out, "optional output directory");

  int trials = 500, sink_n = 128;
  long long ot_seed = 1;
  std::string ot_out;
  auto* ot = app.add_subcommand("ot-selftest", "exact OT against brute force, Sinkhorn against exact");
  ot->add_option("--trials", trials)->check(CLI::Range(1, 1000000));
  ot->add_option("--seed", ot_seed)->check(CLI::NonNegativeNumber);
  ot->add_option("--sinkhorn-n", sink_n)->check(CLI::Range(2, 2048));
  ot->add_option("--out", ot_out, "optional output directory");

  Common sim_c, twin_c, bounds_c, vpb_c;
  add_common(app.add_subcommand("simulate", "run one Vlasov-Poisson(-B) simulation"), sim_c, false);
  add_common(app.add_subcommand("twin", "twin-solution stability experiment"), twin_c, true);
  add_common(app.add_subcommand("bounds", "evaluate the stability bound curves"), bounds_c, false);
  add_common(app.add_subcommand("vpb-twin", "magnetized twin experiment"), vpb_c, true);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help("", CLI::AppFormatMode::All);
    return kExitConfigError;
  }

  try {
    Outcome o;
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "verify-growth")
      o = cmd_verify_growth(family, alpha, n, p, d, grid, vg_out, out);
    else if (cmd == "ot-selftest")
      o = cmd_ot_selftest(trials, static_cast<std::uint64_t>(ot_seed), sink_n, ot_out, out);
    else if (cmd == "simulate")
      o = cmd_simulate(sim_c, out);
    else if (cmd == "twin")
      o = cmd_twin(twin_c, false, out);
    else if (cmd == "bounds")
      o = cmd_bounds(bounds_c, out);
    else
      o = cmd_twin(vpb_c, true, out);
    if (!o.ok) err << cmd << ": checks failed, artifacts written\n";
    return o.ok ? kExitOk : kExitCheckFailed;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
  } catch (const RegimeError& e) {
    err << "regime error: " << e.what() << "\n";
  } catch (const CflError& e) {
    err << "CFL error: " << e.what() << "\n";
  } catch (const std::logic_error& e) {
    err << "error: " << e.what() << "\n";
  } catch (const std::runtime_error& e) {
    err << "runtime error: " << e.what() << "\n";
  }
  return kExitConfigError;
}

}  // namespace kinwass
