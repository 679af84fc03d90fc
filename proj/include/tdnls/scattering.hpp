#pragma once

// Free-flow pullback, a finite-horizon Cauchy test for scattering, the
// free asymptotic profile and the harmonic-repulsive reference propagator.

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tdnls/errors.hpp"
#include "tdnls/grid.hpp"
#include "tdnls/resample.hpp"

namespace tdnls {

/// w = e^{-i t Lap/2} u, the multiplier e^{+i t |xi|^2/2}.
inline ComplexField free_pullback(const ComplexField& u, double t) {
  if (!u.all_finite()) throw NumericalGuardError("free_pullback: non-finite field", t);
  if (t == 0.0) return u;
  const int d = u.grid().dim();
  return apply_multiplier(u, [&](const Point& xi) {
    double k2 = 0.0;
    for (int a = 0; a < d; ++a) k2 += xi[a] * xi[a];
    return std::polar(1.0, 0.5 * t * k2);
  });
}

enum class ScatteringVerdict { scattering, not_scattering };

inline const char* to_string(ScatteringVerdict v) {
  return v == ScatteringVerdict::scattering ? "scattering" : "not-scattering";
}

struct CauchyReport {
  std::vector<double> times;
  /// ||w(t_{j+1}) - w(t_j)||_{L^2}
  std::vector<double> differences;
  /// rate(2m)/rate(m) at each interval midpoint m whose double is covered, rate = difference/interval
  std::vector<std::pair<double, double>> doubling_ratios;
  bool monotone_decreasing = false;
  ScatteringVerdict verdict = ScatteringVerdict::not_scattering;
  /// Heuristic finite-horizon classifier, not a proof of scattering.
  std::string label = "heuristic: differences must halve per doubling of t";
  /// Estimated ||u_+ - w(t_last)||, from a power-law fit of the last doubling; +inf when it does not decay fast enough
  double tail_estimate = std::numeric_limits<double>::infinity();
  std::optional<ComplexField> u_plus;
};

/// Pulls each snapshot back by the free flow and tests whether the pullbacks
/// form a Cauchy sequence. Differences all below zero_threshold count as scattering.
inline CauchyReport cauchy_convergence(const std::vector<std::pair<double, ComplexField>>& snapshots,
                                       double zero_threshold = 1e-9) {
  if (snapshots.size() < 4) throw ValidationError("cauchy_convergence: need at least four snapshots");
  CauchyReport r;
  std::optional<ComplexField> prev;
  for (const auto& [t, u] : snapshots) {
    if (!r.times.empty() && !(t > r.times.back()))
      throw ValidationError("cauchy_convergence: snapshot times must be strictly increasing");
    ComplexField w = free_pullback(u, t);
    if (prev) r.differences.push_back(l2_norm(axpy(-1.0, *prev, w)));
    r.times.push_back(t);
    prev = std::move(w);
  }
  r.u_plus = std::move(prev);

  r.monotone_decreasing = true;
  for (std::size_t j = 1; j < r.differences.size(); ++j)
    if (!(r.differences[j] < r.differences[j - 1])) r.monotone_decreasing = false;

  bool all_tiny = true;
  for (double d : r.differences) all_tiny = all_tiny && d <= zero_threshold;
  if (all_tiny) {
    r.verdict = ScatteringVerdict::scattering;
    r.tail_estimate = r.differences.back();
    return r;
  }

  std::vector<double> mid, rate;
  for (std::size_t j = 0; j < r.differences.size(); ++j) {
    mid.push_back(0.5 * (r.times[j] + r.times[j + 1]));
    rate.push_back(r.differences[j] / (r.times[j + 1] - r.times[j]));
  }
  // log-log interpolation of the rate at 2m
  auto rate_at = [&](double t) {
    for (std::size_t j = 0; j + 1 < mid.size(); ++j) {
      if (t >= mid[j] && t <= mid[j + 1]) {
        if (rate[j] <= 0.0 || rate[j + 1] <= 0.0 || mid[j] <= 0.0) {
          const double s = (t - mid[j]) / (mid[j + 1] - mid[j]);
          return (1 - s) * rate[j] + s * rate[j + 1];
        }
        const double s = std::log(t / mid[j]) / std::log(mid[j + 1] / mid[j]);
        return std::exp((1 - s) * std::log(rate[j]) + s * std::log(rate[j + 1]));
      }
    }
    return std::numeric_limits<double>::quiet_NaN();
  };
  bool halves = true;
  for (std::size_t j = 0; j < mid.size(); ++j) {
    if (!(mid[j] > 0.0) || 2.0 * mid[j] > mid.back()) continue;
    const double ratio = rate_at(2.0 * mid[j]) / rate[j];
    r.doubling_ratios.emplace_back(mid[j], ratio);
    if (!(ratio <= 0.5)) halves = false;
  }
  if (r.doubling_ratios.empty()) throw ValidationError("cauchy_convergence: snapshots do not span a doubling of t");
  r.verdict = halves ? ScatteringVerdict::scattering : ScatteringVerdict::not_scattering;

  const double last_ratio = r.doubling_ratios.back().second;
  const double p = -std::log2(last_ratio);
  if (p > 1.0) r.tail_estimate = rate.back() * r.times.back() / (p - 1.0);
  return r;
}

/// Relative L^2 distance between u(t) and t^{-d/2} F(u_+)(x/t) e^{i|x|^2/(2t)}.
inline double asymptotic_profile_error(const ComplexField& u, double t, const ComplexField& u_plus) {
  if (!(t > 0.0)) throw ValidationError("asymptotic_profile_error: t must be positive");
  const auto& g = u.grid();
  const int d = g.dim();
  const auto freqs = mapped_axis_nodes(g, [&](double x) { return x / t; });
  ComplexField profile(g, fourier_transform_at(u_plus, freqs));
  const double scale = std::pow(t, -0.5 * d);
  for_each_node(g, [&](std::size_t i, const Point& x) {
    double r2 = 0.0;
    for (int a = 0; a < d; ++a) r2 += x[a] * x[a];
    profile[i] *= scale * std::polar(1.0, 0.5 * r2 / t);
  });
  const double norm = l2_norm(u);
  if (!(norm > 0.0)) throw ValidationError("asymptotic_profile_error: zero field");
  return l2_norm(axpy(-1.0, profile, u)) / norm;
}

struct RepulsiveOptions {
  /// V = -omega^2 |x|^2/2; omega = sqrt(2) for V = -|x|^2.
  double omega = 1.0;
  /// Use the exact Mehler kernel (coth inside the transform) instead of the large-t form.
  bool exact = false;
};

/// Linear propagator of V = -omega^2|x|^2/2 applied to u_+:
///   (omega/sinh wt)^{d/2} F(u_+ e^{i omega c |.|^2/2})(omega x/sinh wt) e^{i omega coth(wt) |x|^2/2},
/// with c = 1 (large-t form) or c = coth(wt) (exact), sampled on out_grid.
inline ComplexField repulsive_reference(const ComplexField& u_plus, double t, const SpatialGrid& out_grid,
                                        RepulsiveOptions opt = {}) {
  if (!(opt.omega > 0.0)) throw ValidationError("repulsive_reference: omega must be positive");
  if (!(t > 0.0)) throw ValidationError("repulsive_reference: t must be positive");
  if (!opt.exact && t < 1.0) throw ValidationError("repulsive_reference: the large-t form needs t >= 1");
  if (out_grid.dim() != u_plus.grid().dim()) throw ValidationError("repulsive_reference: grid dimensions differ");
  const int d = out_grid.dim();
  const double w = opt.omega;
  const double sh = std::sinh(w * t), coth = std::cosh(w * t) / sh;
  const double inner = opt.exact ? coth : 1.0;
  const ComplexField chirped = pointwise_map(u_plus, [&](Complex z, const Point& y) {
    double r2 = 0.0;
    for (int a = 0; a < d; ++a) r2 += y[a] * y[a];
    return z * std::polar(1.0, 0.5 * w * inner * r2);
  });
  const auto freqs = mapped_axis_nodes(out_grid, [&](double x) { return w * x / sh; });
  ComplexField out(out_grid, fourier_transform_at(chirped, freqs));
  const double scale = std::pow(w / sh, 0.5 * d);
  for_each_node(out_grid, [&](std::size_t i, const Point& x) {
    double r2 = 0.0;
    for (int a = 0; a < d; ++a) r2 += x[a] * x[a];
    out[i] *= scale * std::polar(1.0, 0.5 * w * coth * r2);
  });
  return out;
}

}  // namespace tdnls
