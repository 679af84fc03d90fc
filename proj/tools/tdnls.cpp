// tdnls: scenario runs, sweeps, Hill pairs, ledger evaluation, growth fits and
// potential checks from the command line.
//
// Exit codes: 0 ok, 2 validation error, 3 numerical-guard abort,
// 4 analysis verdict contradicts the scenario's expectations (--strict).

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tdnls/scenario.hpp"
#include "tdnls/tdnls.hpp"

namespace {

using nlohmann::json;
using namespace tdnls;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitGuard = 3;
constexpr int kExitVerdict = 4;

struct Globals {
  int jobs = 1;
  std::string out_dir;
  std::string profile = "fast";
  bool strict = false;
};

struct OmegaArgs {
  std::string kind = "constant";
  double c = 0.0;
  double gamma = 3.0;
  double slope = 0.0;

  void add(CLI::App* app) {
    app->add_option("--omega-kind", kind, "constant | power_decay | oscillatory | affine")
        ->capture_default_str();
    app->add_option("--c", c, "coefficient c of Omega")->capture_default_str();
    app->add_option("--gamma", gamma, "decay exponent for power_decay")->capture_default_str();
    app->add_option("--slope", slope, "slope for affine")->capture_default_str();
  }

  TimeFunction build() const { return build_time_function({kind, c, gamma, slope, {}, {}}, "omega"); }
};

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

// --- run -------------------------------------------------------------------

int cmd_run(const std::string& file, const Globals& g) {
  const Scenario s = load_scenario(file);
  RunOptions opt;
  opt.out_dir = g.out_dir;
  opt.profile = tolerance_profile(g.profile);
  const auto res = run_scenario(s, opt);
  std::cerr << s.name << ": " << res.trajectory.steps << " steps, max mass drift " << res.trajectory.max_mass_drift
            << ", artifacts in " << res.directory.string() << "\n";
  if (res.summary.contains("scattering"))
    std::cerr << "  verdict: " << res.summary["scattering"]["verdict"].get<std::string>() << " ("
              << res.summary["scattering"]["label"].get<std::string>() << ")\n";
  if (!res.expectations_met) {
    std::cerr << "  expectations not met: " << res.summary["expectations"].dump() << "\n";
    if (g.strict) return kExitVerdict;
  }
  return kExitOk;
}

// --- sweep -----------------------------------------------------------------

int cmd_sweep(const std::string& file, const std::vector<std::string>& grid, const Globals& g) {
  const Scenario s = load_scenario(file);
  validate_scenario(s);
  std::vector<SweepAxis> axes;
  for (const auto& a : grid) axes.push_back(parse_sweep_axis(a));
  RunOptions opt;
  opt.out_dir = g.out_dir.empty() ? (s.output_dir.empty() ? "out" : s.output_dir) : g.out_dir;
  opt.profile = tolerance_profile(g.profile);
  const auto rows = run_sweep(s, axes, g.jobs, opt);
  const std::string table = sweep_table_csv(rows);
  const auto dir = std::filesystem::path(opt.out_dir);
  std::filesystem::create_directories(dir);
  std::ofstream(dir / (s.name + "_sweep.csv")) << table;
  std::cout << table;
  bool verdict_failure = false;
  for (const auto& r : rows)
    if (r.status == "ok" && r.summary.contains("expectations_met") && !r.summary["expectations_met"].get<bool>())
      verdict_failure = true;
  return g.strict && verdict_failure ? kExitVerdict : kExitOk;
}

// --- hill ------------------------------------------------------------------

struct HillArgs {
  OmegaArgs omega;
  bool pair = false;
  double T = 20.0, T_max = 0.0;
  std::optional<double> extend_to;
  double t0 = 0.0, t1 = 10.0, h = 1e-3;
  double mu = 0.0, mu_dot = 1.0, nu = 1.0, nu_dot = 0.0;
  int dim = 1;
  double sigma = 1.0;
  std::string output;
};

int cmd_hill(const HillArgs& a) {
  const TimeFunction omega = a.omega.build();
  json info;
  std::optional<HillSolution> hill;
  if (a.pair) {
    PairOptions po;
    po.T = a.T;
    po.T_max = a.T_max;
    const auto p = construct_scattering_pair(omega, po);
    info = {{"mode", "pair"},
            {"T", p.T},
            {"T_max", p.T_max},
            {"contraction", p.contraction},
            {"nu_limit", p.nu_limit},
            {"iterations_nu", p.iterations_nu},
            {"iterations_mu", p.iterations_mu},
            {"residual_nu", p.residual_nu},
            {"residual_mu", p.residual_mu},
            {"wronskian_defect", p.wronskian_defect}};
    if (p.tail_bound) info["tail_bound"] = *p.tail_bound;
    hill = a.extend_to ? extend_backward(p.solution, omega, *a.extend_to) : p.solution;
  } else {
    hill = solve_hill(omega, {a.mu, a.mu_dot, a.nu, a.nu_dot}, uniform_mesh(a.t0, a.t1, a.h));
    info = {{"mode", "ivp"}};
  }
  info["max_wronskian_defect"] = hill->max_wronskian_defect();
  info["min_nu"] = hill->min_nu();
  info["points"] = hill->size();
  if (a.output.empty() || a.output == "-") {
    write_hill_csv(std::cout, *hill, a.dim, a.sigma);
  } else {
    std::ofstream out(a.output);
    if (!out) throw ValidationError("hill: cannot write " + a.output);
    write_hill_csv(out, *hill, a.dim, a.sigma);
  }
  std::cerr << info.dump() << "\n";
  return kExitOk;
}

// --- bound -----------------------------------------------------------------

struct BoundArgs {
  LedgerInputs in;
  double f = 0.0;
  int levels = 1;
  std::string trace;
};

int cmd_bound(BoundArgs a) {
  const double fc = a.f;
  a.in.f = [fc](double) { return fc; };
  const auto L = double_exp_ledger(a.in);
  json j = {{"tau_star", L.tau_star},
            {"tau", L.tau},
            {"N", L.N},
            {"A", L.A},
            {"b", L.b},
            {"f_t", L.f_t},
            {"amplification", std::isfinite(std::pow(L.A, static_cast<double>(L.N)))
                                  ? json(std::pow(L.A, static_cast<double>(L.N)))
                                  : json(nullptr)},
            {"log_amplification", static_cast<double>(L.N) * std::log(L.A)},
            {"bound", std::isfinite(L.bound) ? json(L.bound) : json(nullptr)},
            {"log_bound", std::isfinite(L.log_bound) ? json(L.log_bound) : json(nullptr)},
            {"C1", std::isfinite(L.C1) ? json(L.C1) : json(nullptr)},
            {"bound_check", L.bound_check},
            {"kappa_identity", a.in.C * std::pow(L.tau_star, a.in.alpha) *
                                   (a.in.confining ? 1.0 : std::exp(a.in.C * a.in.t))}};
  if (a.levels > 1) j["levels"] = iterated_ledger(a.in, a.levels);
  if (!a.trace.empty()) {
    std::ofstream out(a.trace);
    if (!out) throw ValidationError("bound: cannot write " + a.trace);
    out << "j,t_j,B_j\n";
    char buf[128];
    for (const auto& s : L.trace) {
      std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", s.j, s.t_j, s.B_j);
      out << buf;
    }
  }
  print_json(j);
  return kExitOk;
}

// --- fit -------------------------------------------------------------------

struct FitArgs {
  std::string file;
  std::string column;
  std::string time_column = "t";
  std::string model = "auto";
  std::optional<double> from, to;
};

int cmd_fit(const FitArgs& a) {
  std::ifstream in(a.file);
  if (!in) throw ValidationError("fit: cannot read " + a.file);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("fit: empty file");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string h;
    while (std::getline(ss, h, ',')) header.push_back(h);
  }
  auto index_of = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw ValidationError("fit: no column '" + name + "'");
  };
  const std::size_t ti = index_of(a.time_column), yi = index_of(a.column);
  std::vector<double> t, y;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    if (cells.size() != header.size()) throw ValidationError("fit: row " + std::to_string(row) + " has wrong width");
    double tv = 0.0, yv = 0.0;
    try {
      tv = std::stod(cells[ti]);
      yv = std::stod(cells[yi]);
    } catch (const std::exception&) {
      throw ValidationError("fit: row " + std::to_string(row) + " is not numeric");
    }
    if ((a.from && tv < *a.from) || (a.to && tv > *a.to)) continue;
    t.push_back(tv);
    y.push_back(yv);
  }
  json j = {{"column", a.column}, {"points", t.size()}};
  auto fit_json = [](const GrowthFit& f) {
    return json{{"model", to_string(f.model)},
                {"exponent", f.exponent},
                {"intercept", f.intercept},
                {"residual", f.residual},
                {"points", f.points},
                {"valid", f.valid}};
  };
  if (a.model == "auto") {
    const auto c = classify(t, y);
    j["best"] = to_string(c.best);
    j["relabeled"] = c.relabeled;
    for (const auto& f : c.fits) j["fits"].push_back(fit_json(f));
  } else {
    j["fit"] = fit_json(growth_fit(t, y, parse_growth_model(a.model)));
  }
  print_json(j);
  return kExitOk;
}

// --- verify-potential ------------------------------------------------------

struct VerifyArgs {
  std::string scenario;
  std::string kind = "isotropic";
  OmegaArgs omega;
  int dim = 1;
  double t_max = 10.0;
  int t_samples = 21;
  double x_max = 5.0;
  int x_samples = 11;
  AssumptionOptions options;
  double horizon = 1000.0;
};

int cmd_verify(const VerifyArgs& a, const Globals& g) {
  PotentialSpec spec;
  int dim = a.dim;
  if (!a.scenario.empty()) {
    const Scenario s = load_scenario(a.scenario);
    spec = build_potential(s.potential, s.grid.dim);
    dim = s.grid.dim;
  } else if (a.kind == "isotropic") {
    spec = IsotropicHarmonic{a.omega.build()};
  } else if (a.kind == "repulsive") {
    spec = RepulsivePotential{};
  } else if (a.kind == "zero") {
    spec = ZeroPotential{};
  } else {
    throw ValidationError("verify-potential: --kind must be isotropic, repulsive or zero (or use --scenario)");
  }
  if (a.t_samples < 1 || a.x_samples < 1) throw ValidationError("verify-potential: sample counts must be >= 1");
  std::vector<double> ts;
  for (int i = 0; i < a.t_samples; ++i)
    ts.push_back(a.t_samples == 1 ? 0.0 : a.t_max * i / (a.t_samples - 1.0));
  std::vector<Point> xs;
  const int per_axis = a.x_samples;
  const int total = dim == 1 ? per_axis : (dim == 2 ? per_axis * per_axis : per_axis * per_axis * per_axis);
  for (int k = 0; k < total; ++k) {
    Point x{0.0, 0.0, 0.0};
    int rest = k;
    for (int ax = 0; ax < dim; ++ax) {
      const int i = rest % per_axis;
      rest /= per_axis;
      x[ax] = per_axis == 1 ? 0.0 : -a.x_max + 2.0 * a.x_max * i / (per_axis - 1.0);
    }
    xs.push_back(x);
  }
  const auto r = verify_assumption(spec, dim, ts, xs, a.options);
  json j = {{"passes", r.passes}, {"sup_unit_ball", r.sup_unit_ball}, {"failure", r.failure}};
  for (const auto& [order, b] : r.worst_bounds) j["worst_bounds"][std::to_string(order)] = b;
  if (const auto om = isotropic_frequency(spec)) {
    const auto sh = sharpness_classifier(*om, a.horizon);
    j["sharpness"] = {{"limsup_estimate", sh.limsup_estimate}, {"regime", to_string(sh.regime)}};
  }
  print_json(j);
  return g.strict && !r.passes ? kExitVerdict : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tdnls: NLS with time-dependent quadratic potentials"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--jobs", g.jobs, "concurrent sweep cells")->capture_default_str();
  app.add_option("--out-dir", g.out_dir, "artifact root (default: scenario output_dir or ./out)");
  app.add_option("--tolerance-profile", g.profile, "fast | strict")
      ->check(CLI::IsMember({"fast", "strict"}))
      ->capture_default_str();
  app.add_flag("--strict", g.strict, "exit 4 when an analysis verdict contradicts the scenario's expectations");

  std::string run_file;
  auto* run = app.add_subcommand("run", "run one scenario file");
  run->add_option("file", run_file, "scenario YAML")->required();

  std::string sweep_file;
  std::vector<std::string> sweep_grid;
  auto* sweep = app.add_subcommand("sweep", "run a parameter grid over a scenario");
  sweep->add_option("file", sweep_file, "scenario YAML")->required();
  sweep->add_option("--grid", sweep_grid, "key=v1,v2,... with key in gamma, sigma, c, dt, t_end")->required();

  HillArgs ha;
  auto* hill = app.add_subcommand("hill", "solve the Hill equation or construct the scattering pair; CSV output");
  ha.omega.add(hill);
  hill->add_flag("--pair", ha.pair, "construct (mu, nu) normalized at infinity instead of an initial value problem");
  hill->add_option("--T", ha.T, "pair: left end of the fixed-point interval")->capture_default_str();
  hill->add_option("--T-max", ha.T_max, "pair: truncation horizon (0 = 100 T)")->capture_default_str();
  hill->add_option("--extend-to", ha.extend_to, "pair: integrate backward to this time");
  hill->add_option("--t0", ha.t0)->capture_default_str();
  hill->add_option("--t1", ha.t1)->capture_default_str();
  hill->add_option("--step", ha.h, "mesh step")->capture_default_str();
  hill->add_option("--mu", ha.mu)->capture_default_str();
  hill->add_option("--mu-dot", ha.mu_dot)->capture_default_str();
  hill->add_option("--nu", ha.nu)->capture_default_str();
  hill->add_option("--nu-dot", ha.nu_dot)->capture_default_str();
  hill->add_option("--dim", ha.dim, "dimension for the H column")->capture_default_str();
  hill->add_option("--sigma", ha.sigma, "sigma for the H column")->capture_default_str();
  hill->add_option("-o,--output", ha.output, "CSV file (default stdout)");

  BoundArgs ba;
  auto* bound = app.add_subcommand("bound", "evaluate the interval-splitting ledger");
  bound->add_option("--C", ba.in.C, "Strichartz constant (>= 1)")->capture_default_str();
  bound->add_option("--alpha", ba.in.alpha)->capture_default_str();
  bound->add_option("--tau0", ba.in.tau0)->capture_default_str();
  bound->add_option("--t", ba.in.t)->capture_default_str();
  bound->add_option("--w0", ba.in.w0)->capture_default_str();
  bound->add_option("--f", ba.f, "constant driving term f(t)")->capture_default_str();
  bound->add_option("--kappa", ba.in.kappa, "right-hand side of C tau^alpha e^{Ct} = kappa")->capture_default_str();
  bound->add_flag("--p-infinite", ba.in.p_infinite, "per-interval factor 1/(1 - kappa) instead of 2/(1 - kappa)");
  bound->add_flag("--confining", ba.in.confining, "drop the e^{Ct} factor");
  bound->add_option("--levels", ba.levels, "iterate the ledger this many levels")->capture_default_str();
  bound->add_option("--trace", ba.trace, "write (j, t_j, B_j) CSV");

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "fit growth models to a CSV column");
  fit->add_option("file", fa.file, "CSV with a header row")->required();
  fit->add_option("--column", fa.column, "series to fit")->required();
  fit->add_option("--time-column", fa.time_column)->capture_default_str();
  fit->add_option("--model", fa.model, "auto | bounded | poly | exp | double_exp")->capture_default_str();
  fit->add_option("--from", fa.from, "drop rows with t below this");
  fit->add_option("--to", fa.to, "drop rows with t above this");

  VerifyArgs va;
  auto* verify = app.add_subcommand("verify-potential", "sample the at-most-quadratic hypothesis on a potential");
  verify->add_option("--scenario", va.scenario, "take the potential from a scenario file");
  verify->add_option("--kind", va.kind, "isotropic | repulsive | zero")->capture_default_str();
  va.omega.add(verify);
  verify->add_option("--dim", va.dim)->capture_default_str();
  verify->add_option("--t-max", va.t_max)->capture_default_str();
  verify->add_option("--t-samples", va.t_samples)->capture_default_str();
  verify->add_option("--x-max", va.x_max)->capture_default_str();
  verify->add_option("--x-samples", va.x_samples, "per axis")->capture_default_str();
  verify->add_option("--max-order", va.options.max_order)->capture_default_str();
  verify->add_option("--threshold", va.options.threshold)->capture_default_str();
  verify->add_option("--horizon", va.horizon, "sharpness classifier horizon")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*run) return cmd_run(run_file, g);
    if (*sweep) return cmd_sweep(sweep_file, sweep_grid, g);
    if (*hill) return cmd_hill(ha);
    if (*bound) return cmd_bound(ba);
    if (*fit) return cmd_fit(fa);
    if (*verify) return cmd_verify(va, g);
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const NumericalGuardError& e) {
    std::cerr << "numerical guard at t = " << e.time() << ": " << e.what() << "\n";
    return kExitGuard;
  } catch (const std::out_of_range& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitOk;
}
