#pragma once

// Per-slice functionals (mass, energies, Sigma^k norms, momenta, J-norm, L^r
// norms) and finite-difference checks of the exact evolution identities.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tdnls/errors.hpp"
#include "tdnls/grid.hpp"
#include "tdnls/model.hpp"
#include "tdnls/potentials.hpp"

namespace tdnls {

struct DiagnosticsConfig {
  /// Highest k for Sigma^k, H^k and momenta.
  int max_k = 3;
  /// Exponents r of the reported L^r norms; infinity allowed.
  std::vector<double> lr_exponents{4.0};
  /// The field is the v of the non-autonomous equation; enables y(t).
  bool v_frame = false;
  double boundary_fraction = 0.05;
};

struct DiagnosticsRecord {
  double t = 0.0;
  double mass = 0.0;
  double kinetic = 0.0;
  double potential_term = 0.0;
  /// c(t)/(sigma+1) int |u|^{2 sigma + 2}
  double nonlinear_term = 0.0;
  /// int |u|^{2 sigma + 2}
  double nonlinear_integral = 0.0;
  double E = 0.0;
  double pseudoE = 0.0;
  /// sigma_norms[k] = sum over |alpha| + |beta| <= k of ||x^alpha d^beta u||, k = 0..K
  std::vector<double> sigma_norms;
  /// momenta[k] = || |x|^k u ||
  std::vector<double> momenta;
  /// hk_norms[k] = sum over |beta| <= k of ||d^beta u||
  std::vector<double> hk_norms;
  std::vector<std::pair<double, double>> lr_norms;
  double J_norm = 0.0;
  /// t^2 H(t)/(sigma+1) ||v||^{2 sigma + 2}; NaN outside the v-frame.
  double y = std::numeric_limits<double>::quiet_NaN();
  /// Im int conj(u) (x - grad V).grad u + c'(t)/(sigma+1) int |u|^{2 sigma + 2}
  double pseudo_energy_rate = 0.0;
  /// int dV/dt |u|^2 + c'(t)/(sigma+1) int |u|^{2 sigma + 2}
  double energy_rate = 0.0;
  double boundary_amplitude = 0.0;

  double lr_norm(double r) const {
    for (const auto& [e, v] : lr_norms)
      if (e == r) return v;
    throw ValidationError("record has no L^" + std::to_string(r) + " norm; add it to lr_exponents");
  }
};

/// Spectral gradient (d_1 u, ..., d_d u).
inline std::vector<ComplexField> gradient(const ComplexField& u) {
  std::vector<ComplexField> g;
  for (int a = 0; a < u.grid().dim(); ++a) {
    MultiIndex e{0, 0, 0};
    e[a] = 1;
    g.push_back(derivative(u, e));
  }
  return g;
}

/// ||(x + i t grad) v||_{L^2}
inline double j_norm(const ComplexField& v, double t) {
  const auto& g = v.grid();
  const auto grad = gradient(v);
  double s = 0.0;
  for (int a = 0; a < g.dim(); ++a) {
    for_each_node(g, [&](std::size_t i, const Point& x) {
      s += std::norm(x[a] * v[i] + Complex(0.0, t) * grad[a][i]);
    });
  }
  return std::sqrt(s * g.cell_volume());
}

namespace detail {

struct SigmaTerms {
  std::vector<double> sigma;  // cumulative over order
  std::vector<double> hk;
};

inline SigmaTerms sigma_terms(const ComplexField& u, int k) {
  const auto& g = u.grid();
  const double dv = g.cell_volume();
  std::vector<double> by_order(k + 1, 0.0), hk_by_order(k + 1, 0.0);
  std::vector<std::pair<MultiIndex, RealField>> weights;
  for (int m = 0; m <= k; ++m)
    for (const auto& alpha : multi_indices_of_order(g.dim(), m)) weights.emplace_back(alpha, moment_weight(g, alpha));
  RealField density(u.size());
  for (int mb = 0; mb <= k; ++mb) {
    for (const auto& beta : multi_indices_of_order(g.dim(), mb)) {
      const ComplexField db = derivative(u, beta);
      for (std::size_t i = 0; i < u.size(); ++i) density[i] = std::norm(db[i]);
      for (const auto& [alpha, w] : weights) {
        const int total = order(alpha) + mb;
        if (total > k) continue;
        double s = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) s += w[i] * w[i] * density[i];
        const double term = std::sqrt(s * dv);
        by_order[total] += term;
        if (order(alpha) == 0) hk_by_order[mb] += term;
      }
    }
  }
  SigmaTerms out{std::vector<double>(k + 1), std::vector<double>(k + 1)};
  double acc = 0.0, hacc = 0.0;
  for (int m = 0; m <= k; ++m) {
    acc += by_order[m];
    hacc += hk_by_order[m];
    out.sigma[m] = acc;
    out.hk[m] = hacc;
  }
  return out;
}

}  // namespace detail

/// Sigma^k norm: sum over |alpha| + |beta| <= k of ||x^alpha d^beta u||_{L^2},
/// derivative applied first.
inline double sigma_norm(const ComplexField& u, int k) {
  if (k < 0 || k > kMaxDerivativeOrder)
    throw ValidationError("sigma_norm: k must lie in [0, " + std::to_string(kMaxDerivativeOrder) + "]");
  return detail::sigma_terms(u, k).sigma[k];
}

/// All functionals of one time slice.
inline DiagnosticsRecord compute_record(const ComplexField& u, double t, const Model& model,
                                        const DiagnosticsConfig& config = {}) {
  if (config.max_k < 1 || config.max_k > kMaxDerivativeOrder)
    throw ValidationError("diagnostics: max_k must lie in [1, " + std::to_string(kMaxDerivativeOrder) + "]");
  if (!u.all_finite()) throw NumericalGuardError("diagnostics: non-finite field", t);
  const auto& g = u.grid();
  const int d = g.dim();
  const double dv = g.cell_volume();
  const double sigma = model.sigma;
  const double c = model.nonlinearity(t);
  const double cdot = model.nonlinearity.derivative(t);

  DiagnosticsRecord r;
  r.t = t;
  r.mass = mass(u);
  const auto grad = gradient(u);

  double kin = 0.0, pot = 0.0, nl = 0.0, x2 = 0.0, rate = 0.0, erate = 0.0, j2 = 0.0;
  std::vector<double> mom(config.max_k + 1, 0.0);
  const bool time_dependent = !is_time_independent(model.potential);
  for_each_node(g, [&](std::size_t i, const Point& x) {
    const Complex z = u[i];
    const double rho = std::norm(z);
    const double r2 = squared_norm(x, d);
    const Point gv = potential_gradient(model.potential, t, x, d);
    pot += potential_value(model.potential, t, x, d) * rho;
    if (time_dependent) erate += potential_time_derivative(model.potential, t, x, d) * rho;
    nl += std::pow(rho, sigma + 1.0);
    x2 += r2 * rho;
    double rk = 1.0;
    for (int k = 0; k <= config.max_k; ++k) {
      mom[k] += rk * rho;
      rk *= r2;
    }
    for (int a = 0; a < d; ++a) {
      const Complex da = grad[a][i];
      kin += std::norm(da);
      rate += ((x[a] - gv[a]) * std::conj(z) * da).imag();
      j2 += std::norm(x[a] * z + Complex(0.0, t) * da);
    }
  });
  r.kinetic = 0.5 * kin * dv;
  r.potential_term = pot * dv;
  r.nonlinear_integral = nl * dv;
  r.nonlinear_term = c / (sigma + 1.0) * r.nonlinear_integral;
  r.E = r.kinetic + r.nonlinear_term + r.potential_term;
  r.pseudoE = r.kinetic + r.nonlinear_term + 0.5 * x2 * dv;
  const double cdot_term = cdot / (sigma + 1.0) * r.nonlinear_integral;
  r.pseudo_energy_rate = rate * dv + cdot_term;
  r.energy_rate = erate * dv + cdot_term;
  r.J_norm = std::sqrt(j2 * dv);
  r.momenta.resize(config.max_k + 1);
  for (int k = 0; k <= config.max_k; ++k) r.momenta[k] = std::sqrt(mom[k] * dv);

  auto terms = detail::sigma_terms(u, config.max_k);
  r.sigma_norms = std::move(terms.sigma);
  r.hk_norms = std::move(terms.hk);
  for (double e : config.lr_exponents) r.lr_norms.emplace_back(e, lp_norm(u, e));
  if (config.v_frame) r.y = t * t * r.nonlinear_term;
  r.boundary_amplitude = boundary_amplitude_ratio(u, config.boundary_fraction);
  return r;
}

/// Column names in output order: t, mass, E, pseudoE, sigma1..K, mom1..K,
/// h1..K, Jnorm, y, L<r>..., then kinetic, potential, nonlinear, the two
/// rates and the boundary amplitude.
inline std::vector<std::string> csv_columns(const DiagnosticsConfig& config) {
  std::vector<std::string> cols{"t", "mass", "E", "pseudoE"};
  for (int k = 1; k <= config.max_k; ++k) cols.push_back("sigma" + std::to_string(k));
  for (int k = 1; k <= config.max_k; ++k) cols.push_back("mom" + std::to_string(k));
  for (int k = 1; k <= config.max_k; ++k) cols.push_back("h" + std::to_string(k));
  cols.push_back("Jnorm");
  cols.push_back("y");
  for (double e : config.lr_exponents) {
    char buf[32];
    if (std::isinf(e))
      std::snprintf(buf, sizeof buf, "Linf");
    else
      std::snprintf(buf, sizeof buf, "L%g", e);
    cols.emplace_back(buf);
  }
  for (const char* extra : {"kinetic", "potential", "nonlinear", "pseudoE_rate", "E_rate", "boundary"})
    cols.emplace_back(extra);
  return cols;
}

inline std::vector<double> csv_values(const DiagnosticsRecord& r) {
  std::vector<double> v{r.t, r.mass, r.E, r.pseudoE};
  const std::size_t k = r.sigma_norms.empty() ? 0 : r.sigma_norms.size() - 1;
  for (std::size_t i = 1; i <= k; ++i) v.push_back(r.sigma_norms[i]);
  for (std::size_t i = 1; i <= k; ++i) v.push_back(r.momenta[i]);
  for (std::size_t i = 1; i <= k; ++i) v.push_back(r.hk_norms[i]);
  v.push_back(r.J_norm);
  v.push_back(r.y);
  for (const auto& [e, n] : r.lr_norms) v.push_back(n);
  for (double x : {r.kinetic, r.potential_term, r.nonlinear_term, r.pseudo_energy_rate, r.energy_rate,
                   r.boundary_amplitude})
    v.push_back(x);
  return v;
}

struct RateCheck {
  double max_defect = 0.0;
  double tolerance = 0.0;
  bool passes = false;
  /// Time of the worst interior record.
  double worst_time = 0.0;
};

namespace detail {

// Three-point derivative at interior node i of a possibly non-uniform series.
inline double centered_derivative(std::span<const double> t, std::span<const double> y, std::size_t i) {
  const double h0 = t[i] - t[i - 1], h1 = t[i + 1] - t[i];
  return (-h1 / (h0 * (h0 + h1))) * y[i - 1] + ((h1 - h0) / (h0 * h1)) * y[i] + (h0 / (h1 * (h0 + h1))) * y[i + 1];
}

template <class Value, class Rate>
RateCheck rate_check(const std::vector<DiagnosticsRecord>& records, double tol_constant, Value&& value,
                     Rate&& rate, const char* what) {
  if (records.size() < 3) throw ValidationError(std::string(what) + ": needs at least three records");
  std::vector<double> t, y;
  for (const auto& r : records) {
    t.push_back(r.t);
    y.push_back(value(r));
  }
  RateCheck c;
  c.worst_time = t[1];
  double h = 0.0;
  for (std::size_t i = 1; i < t.size(); ++i) h = std::max(h, t[i] - t[i - 1]);
  for (std::size_t i = 1; i + 1 < t.size(); ++i) {
    const double defect = std::abs(centered_derivative(t, y, i) - rate(records[i]));
    if (!(defect <= c.max_defect)) {
      c.max_defect = defect;
      c.worst_time = t[i];
    }
  }
  c.tolerance = tol_constant * h * h;
  c.passes = c.max_defect <= c.tolerance;
  return c;
}

}  // namespace detail

/// Compares the centered difference of pseudoE with the rate identity at
/// interior records. Tolerance is tol_constant * (record spacing)^2.
inline RateCheck pseudo_energy_rate_check(const std::vector<DiagnosticsRecord>& records, double tol_constant = 0.1) {
  return detail::rate_check(
      records, tol_constant, [](const DiagnosticsRecord& r) { return r.pseudoE; },
      [](const DiagnosticsRecord& r) { return r.pseudo_energy_rate; }, "pseudo_energy_rate_check");
}

/// Same for E against int dV/dt |u|^2.
inline RateCheck energy_rate_check(const std::vector<DiagnosticsRecord>& records, double tol_constant = 0.1) {
  return detail::rate_check(
      records, tol_constant, [](const DiagnosticsRecord& r) { return r.E; },
      [](const DiagnosticsRecord& r) { return r.energy_rate; }, "energy_rate_check");
}

/// d/dt (||J v||^2/2 + y) against (t H (2 - d sigma) + t^2 H') ||v||^{2 sigma + 2}/(sigma + 1) for v-frame records.
inline RateCheck pseudo_conformal_check(const std::vector<DiagnosticsRecord>& records, const Model& model, int dim,
                                        double tol_constant = 0.1) {
  const double s = model.sigma;
  return detail::rate_check(
      records, tol_constant,
      [](const DiagnosticsRecord& r) {
        if (std::isnan(r.y)) throw ValidationError("pseudo_conformal_check: records are not from a v-frame run");
        return 0.5 * r.J_norm * r.J_norm + r.y;
      },
      [&](const DiagnosticsRecord& r) {
        const double h = model.nonlinearity(r.t), hd = model.nonlinearity.derivative(r.t);
        return (r.t * h * (2.0 - dim * s) + r.t * r.t * hd) * r.nonlinear_integral / (s + 1.0);
      },
      "pseudo_conformal_check");
}

struct DecayReport {
  double delta = 0.0;
  /// max over records with t > 0 of ||v||_r t^delta / (||v||^{1-delta} ||Jv||^delta)
  double fitted_constant = 0.0;
  bool passes = false;
};

/// Gagliardo-Nirenberg time-decay check ||v||_r <= C t^{-delta} ||v||^{1-delta} ||J v||^delta, delta = d(1/2 - 1/r).
inline DecayReport decay_check(const std::vector<DiagnosticsRecord>& records, double r, int dim,
                               double bound = 1.0) {
  if (!(r >= 2.0)) throw ValidationError("decay_check: r must be >= 2");
  if (dim == 2 && std::isinf(r)) throw ValidationError("decay_check: r must be finite in dimension 2");
  if (dim == 3 && r > 6.0) throw ValidationError("decay_check: r must be <= 6 in dimension 3");
  DecayReport rep;
  rep.delta = dim * (0.5 - (std::isinf(r) ? 0.0 : 1.0 / r));
  bool any = false;
  for (const auto& rec : records) {
    if (!(rec.t > 0.0)) continue;
    const double l2 = std::sqrt(rec.mass);
    const double denom = std::pow(l2, 1.0 - rep.delta) * std::pow(rec.J_norm, rep.delta);
    if (!(denom > 0.0)) continue;
    rep.fitted_constant = std::max(rep.fitted_constant, rec.lr_norm(r) * std::pow(rec.t, rep.delta) / denom);
    any = true;
  }
  if (!any) throw ValidationError("decay_check: needs a record with t > 0 and nonzero field");
  rep.passes = rep.fitted_constant <= bound;
  return rep;
}

}  // namespace tdnls
