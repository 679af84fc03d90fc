#pragma once

// Scenario files (YAML), single runs with their analyses, and parameter sweeps.

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "tdnls/bounds.hpp"
#include "tdnls/diagnostics.hpp"
#include "tdnls/errors.hpp"
#include "tdnls/grid.hpp"
#include "tdnls/lens.hpp"
#include "tdnls/model.hpp"
#include "tdnls/potentials.hpp"
#include "tdnls/scattering.hpp"
#include "tdnls/solver.hpp"
#include "tdnls/time_function.hpp"

namespace tdnls {

struct TimeFunctionConfig {
  /// constant | power_decay | oscillatory | affine | tabulated
  std::string kind = "constant";
  double c = 1.0;
  double gamma = 0.0;
  double slope = 0.0;
  std::vector<double> times, values;
  bool operator==(const TimeFunctionConfig&) const = default;
};

struct PotentialConfig {
  /// zero | isotropic | matrix | repulsive
  std::string kind = "zero";
  TimeFunctionConfig omega;
  /// rows of Q for kind = matrix; Q(t) = scale(t) * matrix
  std::vector<std::vector<double>> matrix;
  TimeFunctionConfig scale;
  bool operator==(const PotentialConfig&) const = default;
};

struct GridConfig {
  int dim = 1;
  std::size_t n = 1024;
  double L = 20.0;
  bool operator==(const GridConfig&) const = default;
};

struct InitialConfig {
  /// gaussian | plane_wave
  std::string kind = "gaussian";
  std::vector<double> center, velocity;
  double width = 1.0;
  double mass = 1.0;
  double amplitude = 1.0;
  std::vector<double> kappa;
  /// relative size of a seeded random perturbation, 0 for none
  double perturbation = 0.0;
  std::uint64_t seed = 0;
  bool operator==(const InitialConfig&) const = default;
};

struct SolverSettings {
  double dt = 1e-3;
  double t_end = 1.0;
  std::optional<bool> dealias;
  int stride = 10;
  double mass_drift_limit = 1e-8;
  double blowup_factor = 1e6;
  bool operator==(const SolverSettings&) const = default;
};

struct DiagnosticsSettings {
  int K = 3;
  std::vector<double> lr{4.0};
  std::vector<double> snapshots;
  bool write_snapshots = false;
  bool operator==(const DiagnosticsSettings&) const = default;
};

struct LensSettings {
  double T = 20.0;
  /// 0 means 100 T
  double T_max = 0.0;
  int panels = 4000;
  bool operator==(const LensSettings&) const = default;
};

struct AnalysisSettings {
  bool gronwall = true;
  bool fits = true;
  bool scattering = false;
  /// times at which the direct run is compared with the lens-frame run
  std::vector<double> lens_compare;
  /// fits and the Sigma growth window use records with t >= fit_from (unset: second half)
  std::optional<double> fit_from;
  /// expected outcomes checked in strict mode: verdict, h1, sigma1, mom1, gronwall
  std::map<std::string, std::string> expect;
  bool operator==(const AnalysisSettings&) const = default;
};

struct Scenario {
  std::string name;
  GridConfig grid;
  double sigma = 1.0;
  /// unit | zero
  std::string nonlinearity = "unit";
  PotentialConfig potential;
  InitialConfig initial;
  SolverSettings solver;
  DiagnosticsSettings diagnostics;
  LensSettings lens;
  AnalysisSettings analysis;
  std::string output_dir;
  bool operator==(const Scenario&) const = default;
};

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

inline void check_keys(const YAML::Node& node, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!node.IsMap()) throw ValidationError(where + ": expected a mapping");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw ValidationError(where + ": unknown key '" + key + "'");
  }
}

template <class T>
void read(const YAML::Node& node, const char* key, T& out, const std::string& where) {
  const YAML::Node v = node[key];
  if (!v) return;
  try {
    out = v.as<T>();
  } catch (const YAML::Exception&) {
    throw ValidationError(where + "." + key + ": malformed value");
  }
}

inline TimeFunctionConfig parse_time_function(const YAML::Node& node, const std::string& where) {
  TimeFunctionConfig f;
  if (node.IsScalar()) {
    try {
      f.c = node.as<double>();
    } catch (const YAML::Exception&) {
      throw ValidationError(where + ": expected a number or a mapping");
    }
    return f;
  }
  check_keys(node, where, {"kind", "c", "gamma", "slope", "times", "values"});
  read(node, "kind", f.kind, where);
  read(node, "c", f.c, where);
  read(node, "gamma", f.gamma, where);
  read(node, "slope", f.slope, where);
  read(node, "times", f.times, where);
  read(node, "values", f.values, where);
  return f;
}

}  // namespace detail

inline Scenario parse_scenario(const YAML::Node& root) {
  using detail::check_keys;
  using detail::read;
  Scenario s;
  check_keys(root, "scenario",
             {"name", "grid", "sigma", "nonlinearity", "potential", "initial", "solver", "diagnostics", "lens",
              "analysis", "output_dir"});
  read(root, "name", s.name, "scenario");
  read(root, "sigma", s.sigma, "scenario");
  read(root, "nonlinearity", s.nonlinearity, "scenario");
  read(root, "output_dir", s.output_dir, "scenario");
  if (const auto g = root["grid"]) {
    check_keys(g, "grid", {"dim", "n", "L"});
    read(g, "dim", s.grid.dim, "grid");
    read(g, "n", s.grid.n, "grid");
    read(g, "L", s.grid.L, "grid");
  }
  if (const auto p = root["potential"]) {
    if (p.IsScalar()) {
      read(root, "potential", s.potential.kind, "scenario");
    } else {
      check_keys(p, "potential", {"kind", "omega", "matrix", "scale"});
      read(p, "kind", s.potential.kind, "potential");
      if (p["omega"]) s.potential.omega = detail::parse_time_function(p["omega"], "potential.omega");
      if (p["scale"]) s.potential.scale = detail::parse_time_function(p["scale"], "potential.scale");
      read(p, "matrix", s.potential.matrix, "potential");
    }
  }
  if (const auto i = root["initial"]) {
    check_keys(i, "initial",
               {"kind", "center", "velocity", "width", "mass", "amplitude", "kappa", "perturbation", "seed"});
    read(i, "kind", s.initial.kind, "initial");
    read(i, "center", s.initial.center, "initial");
    read(i, "velocity", s.initial.velocity, "initial");
    read(i, "width", s.initial.width, "initial");
    read(i, "mass", s.initial.mass, "initial");
    read(i, "amplitude", s.initial.amplitude, "initial");
    read(i, "kappa", s.initial.kappa, "initial");
    read(i, "perturbation", s.initial.perturbation, "initial");
    read(i, "seed", s.initial.seed, "initial");
  }
  if (const auto v = root["solver"]) {
    check_keys(v, "solver", {"dt", "t_end", "dealias", "stride", "mass_drift_limit", "blowup_factor"});
    read(v, "dt", s.solver.dt, "solver");
    read(v, "t_end", s.solver.t_end, "solver");
    read(v, "stride", s.solver.stride, "solver");
    read(v, "mass_drift_limit", s.solver.mass_drift_limit, "solver");
    read(v, "blowup_factor", s.solver.blowup_factor, "solver");
    if (v["dealias"]) {
      std::string d;
      read(v, "dealias", d, "solver");
      if (d == "true")
        s.solver.dealias = true;
      else if (d == "false")
        s.solver.dealias = false;
      else if (d != "auto")
        throw ValidationError("solver.dealias: expected true, false or auto");
    }
  }
  if (const auto d = root["diagnostics"]) {
    check_keys(d, "diagnostics", {"K", "lr", "snapshots", "write_snapshots"});
    read(d, "K", s.diagnostics.K, "diagnostics");
    read(d, "lr", s.diagnostics.lr, "diagnostics");
    read(d, "snapshots", s.diagnostics.snapshots, "diagnostics");
    read(d, "write_snapshots", s.diagnostics.write_snapshots, "diagnostics");
  }
  if (const auto l = root["lens"]) {
    check_keys(l, "lens", {"T", "T_max", "panels"});
    read(l, "T", s.lens.T, "lens");
    read(l, "T_max", s.lens.T_max, "lens");
    read(l, "panels", s.lens.panels, "lens");
  }
  if (const auto a = root["analysis"]) {
    check_keys(a, "analysis", {"gronwall", "fits", "scattering", "lens_compare", "fit_from", "expect"});
    read(a, "gronwall", s.analysis.gronwall, "analysis");
    read(a, "fits", s.analysis.fits, "analysis");
    read(a, "scattering", s.analysis.scattering, "analysis");
    read(a, "lens_compare", s.analysis.lens_compare, "analysis");
    if (a["fit_from"]) {
      double f = 0.0;
      read(a, "fit_from", f, "analysis");
      s.analysis.fit_from = f;
    }
    read(a, "expect", s.analysis.expect, "analysis");
  }
  return s;
}

inline Scenario parse_scenario_text(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ValidationError(std::string("scenario: YAML syntax error: ") + e.what());
  }
  return parse_scenario(root);
}

inline Scenario load_scenario(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ValidationError("scenario: cannot read " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario_text(ss.str());
}

// ---------------------------------------------------------------------------
// Serialization

namespace detail {

inline void emit_time_function(YAML::Emitter& out, const TimeFunctionConfig& f) {
  out << YAML::BeginMap << YAML::Key << "kind" << YAML::Value << f.kind << YAML::Key << "c" << YAML::Value << f.c;
  if (f.gamma != 0.0) out << YAML::Key << "gamma" << YAML::Value << f.gamma;
  if (f.slope != 0.0) out << YAML::Key << "slope" << YAML::Value << f.slope;
  if (!f.times.empty()) {
    out << YAML::Key << "times" << YAML::Value << YAML::Flow << f.times;
    out << YAML::Key << "values" << YAML::Value << YAML::Flow << f.values;
  }
  out << YAML::EndMap;
}

}  // namespace detail

inline std::string serialize_scenario(const Scenario& s) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;
  out << YAML::Key << "name" << YAML::Value << s.name;
  out << YAML::Key << "grid" << YAML::Value << YAML::Flow << YAML::BeginMap << YAML::Key << "dim" << YAML::Value
      << s.grid.dim << YAML::Key << "n" << YAML::Value << s.grid.n << YAML::Key << "L" << YAML::Value << s.grid.L
      << YAML::EndMap;
  out << YAML::Key << "sigma" << YAML::Value << s.sigma;
  out << YAML::Key << "nonlinearity" << YAML::Value << s.nonlinearity;

  out << YAML::Key << "potential" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "kind" << YAML::Value << s.potential.kind;
  out << YAML::Key << "omega" << YAML::Value;
  detail::emit_time_function(out, s.potential.omega);
  if (!s.potential.matrix.empty()) {
    out << YAML::Key << "matrix" << YAML::Value << YAML::BeginSeq;
    for (const auto& row : s.potential.matrix) out << YAML::Flow << row;
    out << YAML::EndSeq;
  }
  out << YAML::Key << "scale" << YAML::Value;
  detail::emit_time_function(out, s.potential.scale);
  out << YAML::EndMap;

  const auto& i = s.initial;
  out << YAML::Key << "initial" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "kind" << YAML::Value << i.kind;
  out << YAML::Key << "center" << YAML::Value << YAML::Flow << i.center;
  out << YAML::Key << "velocity" << YAML::Value << YAML::Flow << i.velocity;
  out << YAML::Key << "width" << YAML::Value << i.width;
  out << YAML::Key << "mass" << YAML::Value << i.mass;
  out << YAML::Key << "amplitude" << YAML::Value << i.amplitude;
  out << YAML::Key << "kappa" << YAML::Value << YAML::Flow << i.kappa;
  out << YAML::Key << "perturbation" << YAML::Value << i.perturbation;
  out << YAML::Key << "seed" << YAML::Value << i.seed;
  out << YAML::EndMap;

  const auto& v = s.solver;
  out << YAML::Key << "solver" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "dt" << YAML::Value << v.dt;
  out << YAML::Key << "t_end" << YAML::Value << v.t_end;
  out << YAML::Key << "dealias" << YAML::Value << (v.dealias ? (*v.dealias ? "true" : "false") : "auto");
  out << YAML::Key << "stride" << YAML::Value << v.stride;
  out << YAML::Key << "mass_drift_limit" << YAML::Value << v.mass_drift_limit;
  out << YAML::Key << "blowup_factor" << YAML::Value << v.blowup_factor;
  out << YAML::EndMap;

  const auto& d = s.diagnostics;
  out << YAML::Key << "diagnostics" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "K" << YAML::Value << d.K;
  out << YAML::Key << "lr" << YAML::Value << YAML::Flow << d.lr;
  out << YAML::Key << "snapshots" << YAML::Value << YAML::Flow << d.snapshots;
  out << YAML::Key << "write_snapshots" << YAML::Value << d.write_snapshots;
  out << YAML::EndMap;

  out << YAML::Key << "lens" << YAML::Value << YAML::Flow << YAML::BeginMap << YAML::Key << "T" << YAML::Value
      << s.lens.T << YAML::Key << "T_max" << YAML::Value << s.lens.T_max << YAML::Key << "panels" << YAML::Value
      << s.lens.panels << YAML::EndMap;

  const auto& a = s.analysis;
  out << YAML::Key << "analysis" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "gronwall" << YAML::Value << a.gronwall;
  out << YAML::Key << "fits" << YAML::Value << a.fits;
  out << YAML::Key << "scattering" << YAML::Value << a.scattering;
  out << YAML::Key << "lens_compare" << YAML::Value << YAML::Flow << a.lens_compare;
  if (a.fit_from) out << YAML::Key << "fit_from" << YAML::Value << *a.fit_from;
  out << YAML::Key << "expect" << YAML::Value << YAML::BeginMap;
  for (const auto& [k, val] : a.expect) out << YAML::Key << k << YAML::Value << val;
  out << YAML::EndMap << YAML::EndMap;

  out << YAML::Key << "output_dir" << YAML::Value << s.output_dir;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

// ---------------------------------------------------------------------------
// Building the numerical objects

inline TimeFunction build_time_function(const TimeFunctionConfig& f, const std::string& where) {
  if (f.kind == "constant") return TimeFunction::constant(f.c);
  if (f.kind == "power_decay") {
    if (!(f.gamma > 0.0)) throw ValidationError(where + ": power_decay needs gamma > 0");
    return TimeFunction::power_decay(f.c, f.gamma);
  }
  if (f.kind == "oscillatory") return TimeFunction::oscillatory(f.c);
  if (f.kind == "affine") return TimeFunction::affine(f.c, f.slope);
  if (f.kind == "tabulated") return TimeFunction::tabulated(f.times, f.values);
  throw ValidationError(where + ": unknown time function kind '" + f.kind + "'");
}

inline PotentialSpec build_potential(const PotentialConfig& p, int dim) {
  if (p.kind == "zero") return ZeroPotential{};
  if (p.kind == "repulsive") return RepulsivePotential{};
  if (p.kind == "isotropic") return IsotropicHarmonic{build_time_function(p.omega, "potential.omega")};
  if (p.kind == "matrix") {
    if (p.matrix.size() != static_cast<std::size_t>(dim))
      throw ValidationError("potential.matrix: expected " + std::to_string(dim) + " rows");
    MatrixHarmonic m;
    for (int a = 0; a < dim; ++a) {
      if (p.matrix[a].size() != static_cast<std::size_t>(dim))
        throw ValidationError("potential.matrix: expected " + std::to_string(dim) + " columns");
      for (int b = 0; b < dim; ++b) m.matrix[a][b] = p.matrix[a][b];
    }
    for (int a = 0; a < dim; ++a)
      for (int b = 0; b < a; ++b)
        if (m.matrix[a][b] != m.matrix[b][a]) throw ValidationError("potential.matrix: Q must be symmetric");
    m.scale = build_time_function(p.scale, "potential.scale");
    return m;
  }
  throw ValidationError("potential: unknown kind '" + p.kind + "'");
}

inline Model build_model(const Scenario& s) {
  Model m;
  m.potential = build_potential(s.potential, s.grid.dim);
  m.sigma = s.sigma;
  if (s.nonlinearity == "unit")
    m.nonlinearity = Nonlinearity::unit();
  else if (s.nonlinearity == "zero")
    m.nonlinearity = Nonlinearity::zero();
  else
    throw ValidationError("nonlinearity: expected unit or zero");
  return m;
}

inline SpatialGrid build_grid(const Scenario& s) { return SpatialGrid(s.grid.dim, s.grid.n, s.grid.L); }

namespace detail {

inline Point to_point(const std::vector<double>& v, int dim, const std::string& where) {
  Point p{0.0, 0.0, 0.0};
  if (v.empty()) return p;
  if (v.size() != static_cast<std::size_t>(dim))
    throw ValidationError(where + ": expected " + std::to_string(dim) + " components");
  for (int a = 0; a < dim; ++a) p[a] = v[a];
  return p;
}

}  // namespace detail

inline ComplexField build_initial(const Scenario& s, const SpatialGrid& grid) {
  const auto& i = s.initial;
  const int d = grid.dim();
  ComplexField u(grid);
  if (i.kind == "gaussian") {
    if (!(i.mass > 0.0)) throw ValidationError("initial.mass must be positive");
    u = gaussian(grid, {detail::to_point(i.center, d, "initial.center"), i.width,
                        detail::to_point(i.velocity, d, "initial.velocity")});
    for (auto& z : u.data()) z *= std::sqrt(i.mass);
  } else if (i.kind == "plane_wave") {
    u = plane_wave(grid, i.amplitude, detail::to_point(i.kappa, d, "initial.kappa"));
  } else {
    throw ValidationError("initial: unknown kind '" + i.kind + "'");
  }
  if (i.perturbation != 0.0) {
    if (!(i.perturbation > 0.0)) throw ValidationError("initial.perturbation must be >= 0");
    const double m0 = mass(u);
    std::mt19937_64 rng(i.seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (auto& z : u.data()) z *= Complex(1.0 + i.perturbation * dist(rng), i.perturbation * dist(rng));
    const double m1 = mass(u);
    for (auto& z : u.data()) z *= std::sqrt(m0 / m1);
  }
  return u;
}

inline SolverConfig build_solver_config(const Scenario& s) {
  SolverConfig c;
  c.dt = s.solver.dt;
  c.t_start = 0.0;
  c.t_end = s.solver.t_end;
  c.dealias = s.solver.dealias;
  c.diagnostics_stride = s.solver.stride;
  c.mass_drift_limit = s.solver.mass_drift_limit;
  c.blowup_factor = s.solver.blowup_factor;
  c.snapshot_times = s.diagnostics.snapshots;
  for (double t : s.analysis.lens_compare) c.snapshot_times.push_back(t);
  c.diagnostics.max_k = s.diagnostics.K;
  c.diagnostics.lr_exponents = s.diagnostics.lr;
  return c;
}

/// Checks everything that can be checked without running.
inline void validate_scenario(const Scenario& s) {
  if (s.name.empty()) throw ValidationError("scenario: name is required");
  for (char ch : s.name)
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.' || ch == '='))
      throw ValidationError("scenario: name may hold only letters, digits and - _ . =");
  const SpatialGrid grid = build_grid(s);
  const Model m = build_model(s);
  validate_model(m, s.grid.dim);
  validate(build_solver_config(s));
  if (s.diagnostics.K < 1) throw ValidationError("diagnostics.K must be >= 1");
  if (s.lens.panels < 2) throw ValidationError("lens.panels must be >= 2");
  for (double r : s.diagnostics.lr)
    if (!(r >= 2.0)) throw ValidationError("diagnostics.lr: exponents must be >= 2");
  build_initial(s, grid);
  if (s.analysis.scattering && s.diagnostics.snapshots.size() < 4)
    throw ValidationError("analysis.scattering needs at least four diagnostics.snapshots");
  if (!s.analysis.lens_compare.empty()) {
    if (s.potential.kind != "isotropic")
      throw ValidationError("analysis.lens_compare needs an isotropic potential");
    if (s.nonlinearity != "unit") throw ValidationError("analysis.lens_compare needs nonlinearity: unit");
    if (s.sigma != std::floor(s.sigma) || s.sigma * s.grid.dim < 2.0)
      throw ValidationError("analysis.lens_compare needs an integer sigma >= 2/d");
  }
  static const std::set<std::string> keys{"verdict", "h1", "sigma1", "mom1", "gronwall"};
  for (const auto& [k, v] : s.analysis.expect) {
    if (!keys.contains(k)) throw ValidationError("analysis.expect: unknown key '" + k + "'");
    if (k == "verdict" && v != "scattering" && v != "not-scattering")
      throw ValidationError("analysis.expect.verdict: expected scattering or not-scattering");
    if ((k == "h1" || k == "sigma1" || k == "mom1")) parse_growth_model(v);
    if (k == "gronwall" && v != "holds") throw ValidationError("analysis.expect.gronwall: expected holds");
  }
}

// ---------------------------------------------------------------------------
// Runs

struct ToleranceProfile {
  std::string name = "fast";
  /// cap applied to the scenario's mass drift limit
  double mass_drift_limit = 1e-8;
  /// constant C of the rate-check tolerance C (stride dt)^2
  double rate_constant = 0.1;
};

inline ToleranceProfile tolerance_profile(const std::string& name) {
  if (name == "fast") return {"fast", 1e-8, 0.1};
  if (name == "strict") return {"strict", 1e-10, 0.1};
  throw ValidationError("tolerance profile must be fast or strict");
}

struct RunOptions {
  /// Artifacts go to out_dir/<name>; empty means the scenario's output_dir (or "out").
  std::string out_dir;
  ToleranceProfile profile;
  bool write_files = true;
};

struct RunResult {
  Trajectory trajectory;
  nlohmann::json summary;
  bool expectations_met = true;
  std::filesystem::path directory;
};

namespace detail {

inline nlohmann::json number(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

inline nlohmann::json fit_json(const Classification& c) {
  nlohmann::json j;
  j["best"] = to_string(c.best);
  j["relabeled"] = c.relabeled;
  for (const auto& f : c.fits)
    j["models"][to_string(f.model)] = {{"exponent", number(f.exponent)},
                                       {"intercept", number(f.intercept)},
                                       {"residual", f.valid ? number(f.residual) : nlohmann::json(nullptr)},
                                       {"points", f.points}};
  return j;
}

inline std::string format_time(double t) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", t);
  return buf;
}

inline void write_field_csv(const std::filesystem::path& file, const ComplexField& u) {
  std::ofstream out(file);
  const auto& g = u.grid();
  const int d = g.dim();
  for (int a = 0; a < d; ++a) out << "x" << a + 1 << ",";
  out << "re,im\n";
  char buf[128];
  for_each_node(g, [&](std::size_t i, const Point& x) {
    for (int a = 0; a < d; ++a) {
      std::snprintf(buf, sizeof buf, "%.17g,", x[a]);
      out << buf;
    }
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", u[i].real(), u[i].imag());
    out << buf;
  });
}

}  // namespace detail

/// CSV text of the trajectory records, %.17g.
inline std::string timeseries_csv(const Trajectory& tr, const DiagnosticsConfig& cfg) {
  std::string s;
  const auto cols = csv_columns(cfg);
  for (std::size_t i = 0; i < cols.size(); ++i) s += (i ? "," : "") + cols[i];
  s += "\n";
  char buf[64];
  for (const auto& r : tr.records) {
    const auto vals = csv_values(r);
    for (std::size_t i = 0; i < vals.size(); ++i) {
      std::snprintf(buf, sizeof buf, i ? ",%.17g" : "%.17g", vals[i]);
      s += buf;
    }
    s += "\n";
  }
  return s;
}

inline RunResult run_scenario(const Scenario& s, const RunOptions& opt = {}) {
  validate_scenario(s);
  const SpatialGrid grid = build_grid(s);
  const Model model = build_model(s);
  SolverConfig cfg = build_solver_config(s);
  cfg.mass_drift_limit = std::min(cfg.mass_drift_limit, opt.profile.mass_drift_limit);
  const ComplexField u0 = build_initial(s, grid);

  RunResult res{evolve(u0, model, cfg), {}, true, {}};
  const Trajectory& tr = res.trajectory;
  const int d = s.grid.dim;

  nlohmann::json& j = res.summary;
  j["name"] = s.name;
  j["profile"] = opt.profile.name;
  j["steps"] = tr.steps;
  j["records"] = tr.records.size();
  j["t_end"] = tr.times.back();
  j["mass_initial"] = tr.records.front().mass;
  j["mass_final"] = tr.records.back().mass;
  j["max_mass_drift"] = tr.max_mass_drift;
  double boundary = 0.0;
  for (const auto& r : tr.records) boundary = std::max(boundary, r.boundary_amplitude);
  j["max_boundary_amplitude"] = boundary;
  j["boundary_warning"] = boundary > 1e-8;

  std::map<std::string, std::string> observed;
  const double t0 = tr.times.front(), t1 = tr.times.back();
  const double fit_from = s.analysis.fit_from.value_or(t0 + 0.5 * (t1 - t0));

  if (tr.records.size() >= 3) {
    const auto pe = pseudo_energy_rate_check(tr.records, opt.profile.rate_constant);
    j["pseudo_energy_rate"] = {{"max_defect", pe.max_defect},
                               {"tolerance", pe.tolerance},
                               {"passes", pe.passes},
                               {"worst_time", pe.worst_time}};
    const auto er = energy_rate_check(tr.records, opt.profile.rate_constant);
    j["energy_rate"] = {{"max_defect", er.max_defect},
                        {"tolerance", er.tolerance},
                        {"passes", er.passes},
                        {"worst_time", er.worst_time}};
  }

  if (s.analysis.gronwall && tr.records.size() >= 3) {
    std::optional<std::pair<double, double>> window;
    if (s.analysis.fit_from) window = std::make_pair(*s.analysis.fit_from, t1);
    const auto sg = sigma_growth(tr.records, d, window);
    j["gronwall"] = {{"C0_min", sg.gronwall.C0_min},
                     {"C0_centered", sg.gronwall.C0_centered},
                     {"envelope_holds", sg.gronwall.envelope_holds},
                     {"max_violation", sg.gronwall.max_violation},
                     {"sigma_C", sg.C},
                     {"sigma_bound_holds", sg.sigma_bound_holds},
                     {"sigma_fitted_rate", sg.fitted_rate}};
    observed["gronwall"] = sg.gronwall.envelope_holds ? "holds" : "fails";
  }

  if (s.analysis.fits) {
    auto series = [&](const char* key, auto get) {
      std::vector<double> t, y;
      for (const auto& r : tr.records)
        if (r.t >= fit_from && r.t > 0.0) {
          t.push_back(r.t);
          y.push_back(get(r));
        }
      if (t.size() < 10) {
        j["fits"][key] = {{"error", "fewer than 10 records in the fit window"}};
        return;
      }
      try {
        const auto c = classify(t, y);
        j["fits"][key] = detail::fit_json(c);
        observed[key] = to_string(c.best);
      } catch (const ValidationError& e) {
        j["fits"][key] = {{"error", e.what()}};
      }
    };
    j["fits"]["window"] = {fit_from, t1};
    series("h1", [](const DiagnosticsRecord& r) { return r.hk_norms[1]; });
    series("sigma1", [](const DiagnosticsRecord& r) { return r.sigma_norms[1]; });
    series("mom1", [](const DiagnosticsRecord& r) { return r.momenta[1]; });
  }

  if (s.analysis.scattering) {
    std::set<double> wanted(s.diagnostics.snapshots.begin(), s.diagnostics.snapshots.end());
    std::vector<std::pair<double, ComplexField>> snaps;
    for (const auto& [t, u] : tr.snapshots)
      if (wanted.contains(t)) snaps.emplace_back(t, u);
    const auto cr = cauchy_convergence(snaps);
    nlohmann::json c;
    c["times"] = cr.times;
    c["differences"] = cr.differences;
    for (const auto& [m, r] : cr.doubling_ratios) c["doubling_ratios"].push_back({m, r});
    c["monotone_decreasing"] = cr.monotone_decreasing;
    c["verdict"] = to_string(cr.verdict);
    c["label"] = cr.label;
    c["tail_estimate"] = detail::number(cr.tail_estimate);
    j["scattering"] = c;
    observed["verdict"] = to_string(cr.verdict);
  }

  std::vector<std::pair<double, ComplexField>> lens_frames;
  if (!s.analysis.lens_compare.empty()) {
    const auto omega = *isotropic_frequency(model.potential);
    PairOptions po;
    po.T = s.lens.T;
    po.T_max = s.lens.T_max;
    po.panels = static_cast<std::size_t>(s.lens.panels);
    const auto pair = construct_scattering_pair(omega, po);
    const auto hill = extend_backward(pair.solution, omega, t0);
    auto map = std::make_shared<const LensMap>(hill, d, s.sigma);
    Model vm{ZeroPotential{}, s.sigma, lens_nonlinearity(map)};
    SolverConfig vc = cfg;
    vc.t_start = map->zeta(t0);
    vc.snapshot_times.clear();
    double t_last = t0;
    for (double t : s.analysis.lens_compare) {
      vc.snapshot_times.push_back(map->zeta(t));
      t_last = std::max(t_last, t);
    }
    vc.t_end = map->zeta(t_last);
    vc.diagnostics.v_frame = true;
    const auto vtr = evolve(lens_inverse(u0, *map, t0), vm, vc);
    nlohmann::json lc;
    lc["pair"] = {{"T", pair.T},
                  {"T_max", pair.T_max},
                  {"contraction", pair.contraction},
                  {"nu_limit", pair.nu_limit},
                  {"wronskian_defect", pair.wronskian_defect}};
    const auto resid = map->residuals();
    lc["map_residual"] = resid.max();
    double worst = 0.0;
    for (double t : s.analysis.lens_compare) {
      const ComplexField* u = nullptr;
      for (const auto& [ts, f] : tr.snapshots)
        if (ts == t) u = &f;
      const ComplexField* v = nullptr;
      for (const auto& [ts, f] : vtr.snapshots)
        if (ts == map->zeta(t)) v = &f;
      if (!u || !v) throw ValidationError("lens_compare: missing snapshot at t = " + detail::format_time(t));
      const ComplexField back = lens_forward(*v, *map, t);
      const double err = l2_norm(axpy(-1.0, back, *u)) / l2_norm(*u);
      worst = std::max(worst, err);
      lc["times"].push_back(t);
      lc["relative_l2"].push_back(err);
      lens_frames.emplace_back(t, back);
    }
    lc["max_relative_l2"] = worst;
    if (vtr.records.size() >= 3) {
      const auto pc = pseudo_conformal_check(vtr.records, vm, d, opt.profile.rate_constant);
      lc["pseudo_conformal"] = {{"max_defect", pc.max_defect}, {"tolerance", pc.tolerance}, {"passes", pc.passes}};
    }
    j["lens_compare"] = lc;
  }

  for (const auto& [k, want] : s.analysis.expect) {
    const auto it = observed.find(k);
    const std::string got = it == observed.end() ? "missing" : it->second;
    const bool ok = got == want;
    j["expectations"][k] = {{"expected", want}, {"observed", got}, {"ok", ok}};
    res.expectations_met = res.expectations_met && ok;
  }
  j["expectations_met"] = res.expectations_met;

  if (opt.write_files) {
    const std::string base = !opt.out_dir.empty() ? opt.out_dir : (!s.output_dir.empty() ? s.output_dir : "out");
    res.directory = std::filesystem::path(base) / s.name;
    std::filesystem::create_directories(res.directory);
    std::ofstream(res.directory / "timeseries.csv") << timeseries_csv(tr, cfg.diagnostics);
    std::ofstream(res.directory / "summary.json") << j.dump(2) << "\n";
    if (s.diagnostics.write_snapshots && !tr.snapshots.empty()) {
      const auto dir = res.directory / "snapshots";
      std::filesystem::create_directories(dir);
      for (const auto& [t, u] : tr.snapshots) detail::write_field_csv(dir / ("u_t" + detail::format_time(t) + ".csv"), u);
      for (const auto& [t, u] : lens_frames)
        detail::write_field_csv(dir / ("lens_u_t" + detail::format_time(t) + ".csv"), u);
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepAxis {
  /// gamma | sigma | c | dt | t_end
  std::string key;
  std::vector<double> values;
};

/// "gamma=1.5,2.5,3"
inline SweepAxis parse_sweep_axis(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw ValidationError("sweep grid '" + text + "': expected key=v1,v2,...");
  SweepAxis a;
  a.key = text.substr(0, eq);
  static const std::set<std::string> keys{"gamma", "sigma", "c", "dt", "t_end"};
  if (!keys.contains(a.key)) throw ValidationError("sweep grid: unknown key '" + a.key + "'");
  std::stringstream ss(text.substr(eq + 1));
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      a.values.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ValidationError("sweep grid: '" + item + "' is not a number");
    }
  }
  if (a.values.empty()) throw ValidationError("sweep grid '" + text + "': no values");
  return a;
}

struct SweepCell {
  std::vector<std::pair<std::string, double>> params;
  Scenario scenario;
};

/// Cartesian product of the axes with duplicate values dropped; each cell gets its own name.
inline std::vector<SweepCell> sweep_cells(const Scenario& base, const std::vector<SweepAxis>& axes) {
  std::vector<SweepAxis> merged;
  for (const auto& a : axes) {
    auto it = std::find_if(merged.begin(), merged.end(), [&](const SweepAxis& m) { return m.key == a.key; });
    if (it == merged.end()) {
      merged.push_back({a.key, {}});
      it = std::prev(merged.end());
    }
    for (double v : a.values)
      if (std::find(it->values.begin(), it->values.end(), v) == it->values.end()) it->values.push_back(v);
  }
  std::vector<SweepCell> cells{{{}, base}};
  for (const auto& a : merged) {
    std::vector<SweepCell> next;
    for (const auto& c : cells)
      for (double v : a.values) {
        SweepCell n = c;
        n.params.emplace_back(a.key, v);
        Scenario& s = n.scenario;
        if (a.key == "gamma") {
          if (s.potential.kind != "isotropic" || s.potential.omega.kind != "power_decay")
            throw ValidationError("sweep over gamma needs an isotropic power_decay potential");
          s.potential.omega.gamma = v;
        } else if (a.key == "sigma") {
          s.sigma = v;
        } else if (a.key == "c") {
          s.potential.omega.c = v;
        } else if (a.key == "dt") {
          s.solver.dt = v;
        } else if (a.key == "t_end") {
          s.solver.t_end = v;
        }
        next.push_back(std::move(n));
      }
    cells = std::move(next);
  }
  for (auto& c : cells) {
    std::string name = base.name;
    for (const auto& [k, v] : c.params) name += "_" + k + "=" + detail::format_time(v);
    c.scenario.name = name;
  }
  return cells;
}

struct SweepRow {
  std::vector<std::pair<std::string, double>> params;
  std::string name;
  /// ok | validation-error | guard-abort | error
  std::string status;
  std::string message;
  nlohmann::json summary;
};

inline std::vector<SweepRow> run_sweep(const Scenario& base, const std::vector<SweepAxis>& axes, int jobs,
                                       const RunOptions& opt) {
  if (jobs < 1) throw ValidationError("--jobs must be >= 1");
  const auto cells = sweep_cells(base, axes);
  std::vector<SweepRow> rows(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      SweepRow& row = rows[i];
      row.params = cells[i].params;
      row.name = cells[i].scenario.name;
      try {
        row.summary = run_scenario(cells[i].scenario, opt).summary;
        row.status = "ok";
      } catch (const ValidationError& e) {
        row.status = "validation-error";
        row.message = e.what();
      } catch (const NumericalGuardError& e) {
        row.status = "guard-abort";
        row.message = e.what();
      } catch (const std::exception& e) {
        row.status = "error";
        row.message = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(jobs), cells.size());
  for (std::size_t k = 0; k < n; ++k) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return rows;
}

/// One row per cell: parameters, status, growth classification per series, verdict.
inline std::string sweep_table_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  if (rows.empty()) return "";
  out << "cell";
  for (const auto& [k, v] : rows.front().params) out << "," << k;
  out << ",status,h1_model,h1_exponent,sigma1_model,sigma1_exp_rate,mom1_model,mom1_poly_exponent,verdict,message\n";
  auto field = [](const nlohmann::json& j, std::initializer_list<const char*> path) -> std::string {
    const nlohmann::json* p = &j;
    for (const char* k : path) {
      if (!p->is_object() || !p->contains(k)) return "";
      p = &(*p)[k];
    }
    if (p->is_string()) return p->get<std::string>();
    if (p->is_number()) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.6g", p->get<double>());
      return buf;
    }
    return "";
  };
  for (const auto& r : rows) {
    out << r.name;
    for (const auto& [k, v] : r.params) out << "," << detail::format_time(v);
    const auto& j = r.summary;
    std::string msg = r.message;
    std::replace(msg.begin(), msg.end(), ',', ';');
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    const std::string h1 = field(j, {"fits", "h1", "best"});
    out << "," << r.status << "," << h1 << ","
        << (h1.empty() ? "" : field(j, {"fits", "h1", "models", h1 == "bounded" ? "poly" : h1.c_str(), "exponent"}))
        << "," << field(j, {"fits", "sigma1", "best"}) << ","
        << field(j, {"fits", "sigma1", "models", "exp", "exponent"}) << "," << field(j, {"fits", "mom1", "best"})
        << "," << field(j, {"fits", "mom1", "models", "poly", "exponent"}) << ","
        << field(j, {"scattering", "verdict"}) << "," << msg << "\n";
  }
  return out.str();
}

}  // namespace tdnls
