#pragma once

// Strang split-step Fourier integrator for
//   i u_t + (1/2) Lap u = V(t, x) u + c(t) |u|^{2 sigma} u.

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "tdnls/diagnostics.hpp"
#include "tdnls/errors.hpp"
#include "tdnls/grid.hpp"
#include "tdnls/model.hpp"
#include "tdnls/potentials.hpp"

namespace tdnls {

struct SolverConfig {
  double dt = 1e-3;
  double t_start = 0.0;
  double t_end = 1.0;
  /// 2/3-rule mask in the kinetic step; unset means on for sigma >= 2.
  std::optional<bool> dealias;
  /// States are stored at these times; the step is shortened to land on them.
  std::vector<double> snapshot_times;
  int diagnostics_stride = 10;
  double mass_drift_limit = 1e-8;
  /// Abort when ||grad u|| exceeds this multiple of its initial value.
  double blowup_factor = 1e6;
  DiagnosticsConfig diagnostics;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<DiagnosticsRecord> records;
  std::vector<std::pair<double, ComplexField>> snapshots;
  ComplexField final_state;
  std::size_t steps = 0;
  double max_mass_drift = 0.0;
};

inline bool dealias_enabled(const SolverConfig& c, const Model& m) { return c.dealias.value_or(m.sigma >= 2.0); }

inline void validate(const SolverConfig& c) {
  if (!(c.dt > 0.0) || !std::isfinite(c.dt)) throw ValidationError("solver: dt must be positive");
  if (!(c.t_end >= c.t_start)) throw ValidationError("solver: t_end must be >= t_start");
  if (c.diagnostics_stride < 1) throw ValidationError("solver: diagnostics_stride must be >= 1");
  for (double s : c.snapshot_times)
    if (s < c.t_start || s > c.t_end) throw ValidationError("solver: snapshot time outside [t_start, t_end]");
}

/// Reusable Strang stepper bound to one grid and model.
class StrangStepper {
 public:
  StrangStepper(const SpatialGrid& grid, Model model, bool dealias)
      : grid_(grid), model_(std::move(model)), sampler_(model_.potential, grid), mask_(grid.size(), 1.0) {
    if (dealias) {
      for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto idx = grid.unflatten(i);
        for (int a = 0; a < grid.dim(); ++a)
          if (3 * std::abs(grid.mode(a, idx[a])) > static_cast<long long>(grid.points(a))) mask_[i] = 0.0;
      }
    }
    integer_sigma_ = model_.sigma == std::floor(model_.sigma) && model_.sigma <= 8.0;
  }

  const Model& model() const { return model_; }

  /// Advances u from t to t + h (h may be negative).
  void step(ComplexField& u, double t, double h) {
    if (!(u.grid() == grid_)) throw ValidationError("stepper: field lives on a different grid");
    phase(u, t, 0.5 * h);
    kinetic(u, h);
    phase(u, t + h, 0.5 * h);
  }

  /// Same step with adjacent half phases merged. A pending leading half was
  /// already applied by the previous call; without flush the trailing half is
  /// doubled and left pending for the next step of the same size.
  void step_chained(ComplexField& u, double t, double h, double t_next, bool& pending, bool flush) {
    if (!pending) phase(u, t, 0.5 * h);
    kinetic(u, h);
    phase(u, t_next, flush ? 0.5 * h : h);
    pending = !flush;
  }

 private:
  void phase(ComplexField& u, double t, double h) {
    const double c = model_.nonlinearity(t);
    const bool linear = c == 0.0;
    if (!sampler_.is_zero()) sampler_.sample(t, v_);
    const bool has_v = !sampler_.is_zero();
    auto& w = u.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      double s = has_v ? v_[i] : 0.0;
      if (!linear) s += c * density_power(std::norm(w[i]));
      if (s != 0.0) w[i] *= std::polar(1.0, -h * s);
    }
  }

  double density_power(double rho) const {
    if (!integer_sigma_) return std::pow(rho, model_.sigma);
    double p = 1.0;
    for (int k = 0; k < static_cast<int>(model_.sigma); ++k) p *= rho;
    return p;
  }

  void kinetic(ComplexField& u, double h) {
    const std::vector<Complex>& symbol = kinetic_symbol(h);
    auto& w = u.data();
    grid_.fft().forward(w.data());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] *= symbol[i];
    grid_.fft().backward(w.data());
  }

  const std::vector<Complex>& kinetic_symbol(double h) {
    for (const auto& [hh, s] : symbols_)
      if (hh == h) return s;
    if (symbols_.size() > 8) symbols_.erase(symbols_.begin());
    const double scale = 1.0 / static_cast<double>(grid_.size());
    auto s = tabulate_symbol(grid_, [&](const Point& xi) {
      return std::polar(scale, -0.5 * h * squared_norm(xi, grid_.dim()));
    });
    for (std::size_t i = 0; i < s.size(); ++i) s[i] *= mask_[i];
    symbols_.emplace_back(h, std::move(s));
    return symbols_.back().second;
  }

  SpatialGrid grid_;
  Model model_;
  PotentialSampler sampler_;
  RealField v_;
  RealField mask_;
  bool integer_sigma_ = false;
  std::vector<std::pair<double, std::vector<Complex>>> symbols_;
};

/// One Strang step: half phase at t, kinetic e^{i dt Lap/2}, half phase at t + dt.
inline ComplexField step_strang(const ComplexField& u, double t, double dt, const Model& model,
                                bool dealias = false) {
  if (!u.all_finite()) throw NumericalGuardError("step_strang: non-finite input", t);
  StrangStepper stepper(u.grid(), model, dealias);
  ComplexField out = u;
  stepper.step(out, t, dt);
  if (!out.all_finite()) throw NumericalGuardError("step_strang: non-finite state", t + dt);
  return out;
}

/// Integrates from config.t_start to config.t_end. Diagnostics are recorded at
/// step 0, every diagnostics_stride steps and at the final step.
inline Trajectory evolve(const ComplexField& u0, const Model& model, const SolverConfig& config) {
  validate(config);
  validate_model(model, u0.grid().dim());
  if (!u0.all_finite()) throw NumericalGuardError("evolve: non-finite initial data", config.t_start);

  StrangStepper stepper(u0.grid(), model, dealias_enabled(config, model));
  Trajectory tr{{}, {}, {}, u0, 0, 0.0};
  ComplexField& u = tr.final_state;
  const double m0 = mass(u0);

  auto record = [&](double t) {
    tr.times.push_back(t);
    tr.records.push_back(compute_record(u, t, model, config.diagnostics));
  };
  record(config.t_start);
  const double grad0 = std::sqrt(2.0 * tr.records.front().kinetic);

  std::vector<double> targets = config.snapshot_times;
  targets.push_back(config.t_end);
  std::sort(targets.begin(), targets.end());
  targets.erase(std::unique(targets.begin(), targets.end()), targets.end());

  std::size_t next_snapshot = 0;
  std::vector<double> snaps = config.snapshot_times;
  std::sort(snaps.begin(), snaps.end());
  snaps.erase(std::unique(snaps.begin(), snaps.end()), snaps.end());
  auto take_snapshots = [&](double t) {
    while (next_snapshot < snaps.size() && snaps[next_snapshot] <= t) {
      tr.snapshots.emplace_back(snaps[next_snapshot], u);
      ++next_snapshot;
    }
  };
  take_snapshots(config.t_start);

  double t = config.t_start;
  for (double target : targets) {
    if (target <= t) continue;
    const auto n = static_cast<std::size_t>(std::max(1.0, std::ceil((target - t) / config.dt - 1e-9)));
    const double h = (target - t) / static_cast<double>(n);
    const double t0 = t;
    bool pending = false;
    for (std::size_t j = 1; j <= n; ++j) {
      const double t_next = j == n ? target : t0 + static_cast<double>(j) * h;
      const bool observed = j == n || (tr.steps + 1) % static_cast<std::size_t>(config.diagnostics_stride) == 0 ||
                            t_next >= config.t_end || (next_snapshot < snaps.size() && snaps[next_snapshot] <= t_next);
      stepper.step_chained(u, t, h, t_next, pending, observed);
      t = t_next;
      ++tr.steps;
      double m = 0.0;
      bool finite = true;
      for (const auto& z : u.values()) {
        const double r = std::norm(z);
        finite = finite && std::isfinite(r);
        m += r;
      }
      if (!finite) throw NumericalGuardError("evolve: non-finite state (blow-up or instability)", t);
      m *= u.grid().cell_volume();
      const double drift = m0 > 0.0 ? std::abs(m - m0) / m0 : std::abs(m);
      tr.max_mass_drift = std::max(tr.max_mass_drift, drift);
      if (drift > config.mass_drift_limit)
        throw NumericalGuardError("evolve: relative mass drift " + std::to_string(drift) +
                                      " exceeds limit; discretization failure (grid too coarse or box too small)",
                                  t);
      const bool last = t >= config.t_end;
      if (tr.steps % static_cast<std::size_t>(config.diagnostics_stride) == 0 || last) {
        record(t);
        const double grad = std::sqrt(2.0 * tr.records.back().kinetic);
        if (grad0 > 0.0 && grad > config.blowup_factor * grad0)
          throw NumericalGuardError("evolve: ||grad u|| grew beyond the blow-up threshold", t);
      }
      take_snapshots(t);
    }
  }
  return tr;
}

struct GaussianData {
  Point center{0.0, 0.0, 0.0};
  double width = 1.0;
  Point velocity{0.0, 0.0, 0.0};
};

/// exp(-|x - c|^2/(2 w^2) + i v.x), scaled to unit discrete mass.
inline ComplexField gaussian(const SpatialGrid& grid, const GaussianData& g = {}) {
  if (!(g.width > 0.0)) throw ValidationError("gaussian: width must be positive");
  ComplexField u(grid);
  const int d = grid.dim();
  for_each_node(grid, [&](std::size_t i, const Point& x) {
    double r2 = 0.0, phase = 0.0;
    for (int a = 0; a < d; ++a) {
      r2 += (x[a] - g.center[a]) * (x[a] - g.center[a]);
      phase += g.velocity[a] * x[a];
    }
    u[i] = std::polar(std::exp(-0.5 * r2 / (g.width * g.width)), phase);
  });
  const double m = mass(u);
  for (auto& z : u.data()) z /= std::sqrt(m);
  return u;
}

/// A e^{i kappa.x}
inline ComplexField plane_wave(const SpatialGrid& grid, Complex amplitude, const Point& kappa) {
  ComplexField u(grid);
  for_each_node(grid, [&](std::size_t i, const Point& x) {
    double phase = 0.0;
    for (int a = 0; a < grid.dim(); ++a) phase += kappa[a] * x[a];
    u[i] = amplitude * std::polar(1.0, phase);
  });
  return u;
}

template <class Fn>
ComplexField initial_condition(const SpatialGrid& grid, Fn&& fn) {
  ComplexField u(grid);
  for_each_node(grid, [&](std::size_t i, const Point& x) { u[i] = fn(x); });
  if (!u.all_finite()) throw ValidationError("initial condition is not finite");
  return u;
}

}  // namespace tdnls
