#pragma once

// Strichartz exponent bookkeeping, the Gronwall envelope of the pseudo-energy,
// the interval-splitting ledger behind the double-exponential bound, and
// growth-law fits of norm time series.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tdnls/diagnostics.hpp"
#include "tdnls/errors.hpp"

namespace tdnls {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

struct Admissibility {
  bool is_admissible = false;
  double p = 0.0;
  double delta = 0.0;
};

/// delta(q) = d(1/2 - 1/q), p = 2/delta (infinite when delta = 0), with the
/// range 2 <= q < 2d/(d-2) for d >= 3, q < infinity for d = 2, q <= infinity for d = 1.
inline Admissibility admissible(double q, int d) {
  if (d < 1 || d > 3) throw ValidationError("admissible: dimension must be 1, 2 or 3");
  if (!(q >= 2.0)) throw ValidationError("admissible: q must be >= 2");
  Admissibility a;
  a.delta = d * (0.5 - (std::isinf(q) ? 0.0 : 1.0 / q));
  a.p = a.delta == 0.0 ? kInfinity : 2.0 / a.delta;
  if (d == 1)
    a.is_admissible = true;
  else if (d == 2)
    a.is_admissible = std::isfinite(q);
  else
    a.is_admissible = q < 2.0 * d / (d - 2.0);
  return a;
}

struct ExponentSet {
  int d = 1;
  double sigma = 1.0;
  double q = 0.0;
  double p = 0.0;
  double theta = 0.0;
  double delta_q = 0.0;
};

/// q = 2 sigma + 2, p = (4 sigma + 4)/(d sigma), theta = 2 sigma (2 sigma + 2)/(2 - (d - 2) sigma).
inline ExponentSet exponent_set(int d, double sigma) {
  if (d < 1 || d > 3) throw ValidationError("exponent_set: dimension must be 1, 2 or 3");
  if (!(sigma > 0.0)) throw ValidationError("exponent_set: sigma must be positive");
  if (d == 3 && !(sigma < 2.0)) throw ValidationError("exponent_set: sigma must be < 2/(d-2) in dimension 3");
  ExponentSet e;
  e.d = d;
  e.sigma = sigma;
  e.q = 2.0 * sigma + 2.0;
  e.p = (4.0 * sigma + 4.0) / (d * sigma);
  e.theta = 2.0 * sigma * (2.0 * sigma + 2.0) / (2.0 - (d - 2.0) * sigma);
  e.delta_q = d * (0.5 - 1.0 / e.q);
  return e;
}

struct HolderDefects {
  /// |1/q' - (2 sigma/q + 1/q)|
  double space = 0.0;
  /// |1/p' - (2 sigma/theta + 1/p)|
  double time = 0.0;
  /// |2/p - delta(q)|
  double admissibility = 0.0;
};

inline HolderDefects holder_defects(const ExponentSet& e) {
  HolderDefects h;
  h.space = std::abs((1.0 - 1.0 / e.q) - (2.0 * e.sigma / e.q + 1.0 / e.q));
  h.time = std::abs((1.0 - 1.0 / e.p) - (2.0 * e.sigma / e.theta + 1.0 / e.p));
  h.admissibility = std::abs(2.0 / e.p - e.delta_q);
  return h;
}

// ---------------------------------------------------------------------------
// Gronwall envelope

struct GronwallReport {
  /// max over consecutive samples of the increment of log(1 + E) per unit time, clamped at 0
  double C0_min = 0.0;
  /// max over interior samples of (centered dE/dt)/(1 + E)
  double C0_centered = 0.0;
  bool envelope_holds = false;
  /// max of E(t) - ((1 + E(0)) e^{C0 (t - t0)} - 1), <= 0 when the envelope holds
  double max_violation = 0.0;
};

inline GronwallReport gronwall_envelope(std::span<const double> t, std::span<const double> pseudo_energy) {
  if (t.size() != pseudo_energy.size() || t.size() < 3)
    throw ValidationError("gronwall_envelope: need >= 3 matching samples");
  GronwallReport r;
  for (std::size_t i = 0; i + 1 < t.size(); ++i) {
    const double rate = (std::log1p(pseudo_energy[i + 1]) - std::log1p(pseudo_energy[i])) / (t[i + 1] - t[i]);
    r.C0_min = std::max(r.C0_min, rate);
  }
  for (std::size_t i = 1; i + 1 < t.size(); ++i) {
    const double d = detail::centered_derivative(t, pseudo_energy, i);
    r.C0_centered = std::max(r.C0_centered, d / (1.0 + pseudo_energy[i]));
  }
  r.max_violation = -kInfinity;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double env = (1.0 + pseudo_energy[0]) * std::exp(r.C0_min * (t[i] - t[0])) - 1.0;
    r.max_violation = std::max(r.max_violation, pseudo_energy[i] - env);
  }
  r.envelope_holds = r.max_violation <= 1e-12 * (1.0 + std::abs(pseudo_energy[0]));
  return r;
}

struct SigmaGrowthReport {
  GronwallReport gronwall;
  /// C of the bound ||u||_Sigma <= C e^{C t} implied by the envelope
  double C = 0.0;
  bool sigma_bound_holds = false;
  /// least-squares slope of log Sigma^1 over the fit window
  double fitted_rate = 0.0;
};

/// Envelope on a trajectory plus the Sigma^1 consequence: with ||xu||, ||grad u|| <= sqrt(2 E),
/// Sigma^1 <= ||u|| + 2 sqrt(2d) sqrt(1 + E(0)) e^{C0 t/2}.
inline SigmaGrowthReport sigma_growth(const std::vector<DiagnosticsRecord>& records, int dim,
                                      std::optional<std::pair<double, double>> window = std::nullopt) {
  if (records.size() < 3) throw ValidationError("sigma_growth: need >= 3 records");
  std::vector<double> t, e;
  for (const auto& r : records) {
    t.push_back(r.t);
    e.push_back(r.pseudoE);
  }
  SigmaGrowthReport s;
  s.gronwall = gronwall_envelope(t, e);
  const double m = std::sqrt(records.front().mass);
  s.C = std::max(m + 2.0 * std::sqrt(2.0 * dim) * std::sqrt(1.0 + e.front()), 0.5 * s.gronwall.C0_min);
  s.sigma_bound_holds = true;
  for (const auto& r : records) {
    if (r.sigma_norms.size() < 2) throw ValidationError("sigma_growth: records lack Sigma^1");
    if (r.sigma_norms[1] > s.C * std::exp(s.C * (r.t - t.front())) * (1.0 + 1e-12)) s.sigma_bound_holds = false;
  }
  const double lo = window ? window->first : t.front() + 0.5 * (t.back() - t.front());
  const double hi = window ? window->second : t.back();
  double st = 0, sy = 0, stt = 0, sty = 0;
  std::size_t n = 0;
  for (const auto& r : records) {
    if (r.t < lo || r.t > hi) continue;
    const double y = std::log(r.sigma_norms[1]);
    st += r.t;
    sy += y;
    stt += r.t * r.t;
    sty += r.t * y;
    ++n;
  }
  if (n < 2) throw ValidationError("sigma_growth: fit window holds fewer than two records");
  s.fitted_rate = (n * sty - st * sy) / (n * stt - st * st);
  return s;
}

// ---------------------------------------------------------------------------
// Interval-splitting ledger

struct LedgerInputs {
  /// Strichartz constant, >= 1
  double C = 1.0;
  double alpha = 1.0;
  double tau0 = 1.0;
  double t = 1.0;
  double w0 = 0.0;
  std::function<double(double)> f = [](double) { return 0.0; };
  /// kappa of C tau^alpha e^{Ct} = kappa
  double kappa = 0.1;
  /// p = infinity branch: per-interval factor C/(1 - kappa) instead of 2C/(1 - kappa)
  bool p_infinite = false;
  /// drop the e^{Ct} factor (bounded-in-time potential growth)
  bool confining = false;
  std::size_t trace_limit = 100000;
};

struct LedgerStep {
  std::size_t j;
  double t_j;
  double B_j;
};

struct BoundLedger {
  double tau_star = 0.0;
  double tau = 0.0;
  std::size_t N = 0;
  /// A = factor * C with factor = 2/(1 - kappa) (or 1/(1 - kappa))
  double A = 0.0;
  /// b = factor * f(t)
  double b = 0.0;
  double f_t = 0.0;
  /// B_N by explicit recursion; +inf if it overflows or N exceeds the iteration cap
  double bound = 0.0;
  /// log B_N from the closed form A^N w0 + b (A^N - 1)/(A - 1)
  double log_bound = 0.0;
  double C1 = 0.0;
  /// B_N <= C1 exp(exp(C1 t)) (w0 + f) (or C1 exp(C1 t)(w0 + f) for the confining variant)
  bool bound_check = false;
  std::vector<LedgerStep> trace;
};

/// log(A^N w0 + b (A^N - 1)/(A - 1)) for A > 1, w0, b >= 0.
inline double ledger_log_closed_form(double A, double b, double w0, double N) {
  if (w0 == 0.0 && b == 0.0) return -kInfinity;
  if (N == 0.0) return std::log(w0);
  const double c = w0 + b / (A - 1.0);
  const double lg = N * std::log(A) + std::log(c);
  return lg + std::log1p(-(b / (A - 1.0)) / c * std::exp(-N * std::log(A)));
}

inline BoundLedger double_exp_ledger(const LedgerInputs& in) {
  if (!(in.alpha > 0.0)) throw ValidationError("double_exp_ledger: alpha must be positive");
  if (!(in.C >= 1.0)) throw ValidationError("double_exp_ledger: Strichartz constant C must be >= 1");
  if (!(in.tau0 > 0.0)) throw ValidationError("double_exp_ledger: tau0 must be positive");
  if (!(in.t >= 0.0)) throw ValidationError("double_exp_ledger: t must be >= 0");
  if (!(in.kappa > 0.0 && in.kappa < 1.0)) throw ValidationError("double_exp_ledger: kappa must lie in (0, 1)");
  if (in.w0 < 0.0) throw ValidationError("double_exp_ledger: w0 must be >= 0");
  if (!in.f) throw ValidationError("double_exp_ledger: f is not callable");

  BoundLedger L;
  const double growth = in.confining ? 0.0 : in.C * in.t / in.alpha;
  L.tau_star = std::pow(in.kappa / in.C, 1.0 / in.alpha) * std::exp(-growth);
  const double factor = (in.p_infinite ? 1.0 : 2.0) / (1.0 - in.kappa);
  L.A = factor * in.C;
  L.f_t = in.f(in.t);
  if (L.f_t < 0.0) throw ValidationError("double_exp_ledger: f must be nonnegative");
  L.b = factor * L.f_t;

  if (in.t == 0.0) {
    L.tau = 0.0;
    L.N = 0;
  } else {
    L.tau = std::min({in.tau0, in.t, L.tau_star});
    const double n = std::ceil(in.t / L.tau - 1e-12);
    if (!(n < 1e18)) throw ValidationError("double_exp_ledger: interval count overflows");
    L.N = static_cast<std::size_t>(std::max(1.0, n));
  }

  L.log_bound = ledger_log_closed_form(L.A, L.b, in.w0, static_cast<double>(L.N));
  constexpr std::size_t kIterationCap = 50'000'000;
  if (L.N <= kIterationCap) {
    double B = in.w0;
    if (L.N <= in.trace_limit) L.trace.push_back({0, 0.0, B});
    for (std::size_t j = 1; j <= L.N; ++j) {
      B = L.A * B + L.b;
      if (L.N <= in.trace_limit) L.trace.push_back({j, std::min(static_cast<double>(j) * L.tau, in.t), B});
    }
    L.bound = B;
  } else {
    L.bound = std::isfinite(std::exp(L.log_bound)) ? std::exp(L.log_bound) : kInfinity;
  }

  const double At = std::max(L.A, 2.0 / (1.0 - in.kappa));
  const double M = std::log(At) * (1.0 / in.tau0 + std::pow(in.C / in.kappa, 1.0 / in.alpha));
  const double scale = in.w0 + L.f_t;
  if (in.confining) {
    L.C1 = std::max(M, 2.0 * At * At);
    L.bound_check = scale == 0.0 ? L.log_bound == -kInfinity
                                 : L.log_bound <= std::log(L.C1) + L.C1 * in.t + std::log(scale) + 1e-12;
  } else {
    const double k = in.C / in.alpha + 1.0;
    const double log_c1 = std::max(std::log(2.0 * k), std::log(2.0 * At * At) + 0.25 * M * M);
    L.C1 = std::exp(log_c1);
    const double rhs = log_c1 + (std::isfinite(L.C1) ? std::exp(L.C1 * in.t) : kInfinity) + std::log(scale);
    L.bound_check = scale == 0.0 ? L.log_bound == -kInfinity : L.log_bound <= rhs + 1e-12;
  }
  return L;
}

/// Level-by-level shadow of the induction over k: level 1 is driven by f, level j + 1 by the bound of level j.
inline std::vector<double> iterated_ledger(const LedgerInputs& in, int levels) {
  if (levels < 1) throw ValidationError("iterated_ledger: need at least one level");
  std::vector<double> out;
  std::function<double(double)> f = in.f;
  for (int k = 0; k < levels; ++k) {
    LedgerInputs level = in;
    level.f = f;
    level.trace_limit = 0;
    out.push_back(double_exp_ledger(level).bound);
    f = [level](double s) {
      LedgerInputs at = level;
      at.t = s;
      return double_exp_ledger(at).bound;
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Growth fits

enum class GrowthModel { bounded, poly, exp, double_exp };

inline const char* to_string(GrowthModel m) {
  switch (m) {
    case GrowthModel::bounded:
      return "bounded";
    case GrowthModel::poly:
      return "poly";
    case GrowthModel::exp:
      return "exp";
    case GrowthModel::double_exp:
      return "double_exp";
  }
  return "?";
}

inline GrowthModel parse_growth_model(const std::string& s) {
  if (s == "bounded") return GrowthModel::bounded;
  if (s == "poly") return GrowthModel::poly;
  if (s == "exp") return GrowthModel::exp;
  if (s == "double_exp") return GrowthModel::double_exp;
  throw ValidationError("unknown growth model '" + s + "'");
}

struct GrowthFit {
  GrowthModel model = GrowthModel::bounded;
  /// bounded: level; poly: log c (y = c t^k); exp: log c (y = c e^{rt}); double_exp: a (y = exp(e^{a + rt}))
  double intercept = 0.0;
  /// poly: k; exp and double_exp: r; bounded: 0
  double exponent = 0.0;
  /// RMS of log(fitted/observed) over the points used
  double residual = 0.0;
  std::size_t points = 0;
  bool valid = false;
};

namespace detail {

struct LineFit {
  double intercept, slope;
};

inline LineFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double den = n * sxx - sx * sx;
  if (den == 0.0) return {sy / n, 0.0};
  const double slope = (n * sxy - sx * sy) / den;
  return {(sy - slope * sx) / n, slope};
}

}  // namespace detail

/// Fit on log-values, so series far beyond double range can be fitted.
inline GrowthFit growth_fit_log(std::span<const double> t, std::span<const double> log_y, GrowthModel model) {
  if (t.size() != log_y.size()) throw ValidationError("growth_fit: series lengths differ");
  if (t.size() < 10) throw ValidationError("growth_fit: need at least 10 points");
  GrowthFit fit;
  fit.model = model;
  std::vector<double> x, y, ly;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(log_y[i])) throw ValidationError("growth_fit: log fits need y > 0 and finite");
    switch (model) {
      case GrowthModel::bounded:
      case GrowthModel::exp:
        x.push_back(t[i]);
        y.push_back(log_y[i]);
        ly.push_back(log_y[i]);
        break;
      case GrowthModel::poly:
        if (t[i] > 0.0) {
          x.push_back(std::log(t[i]));
          y.push_back(log_y[i]);
          ly.push_back(log_y[i]);
        }
        break;
      case GrowthModel::double_exp:
        if (log_y[i] > 0.0) {
          x.push_back(t[i]);
          y.push_back(std::log(log_y[i]));
          ly.push_back(log_y[i]);
        }
        break;
    }
  }
  fit.points = x.size();
  if (x.size() < 3) return fit;

  std::vector<double> pred(x.size());
  if (model == GrowthModel::bounded) {
    // level = mean of y in linear scale
    double m = 0.0;
    const double shift = *std::max_element(ly.begin(), ly.end());
    for (double v : ly) m += std::exp(v - shift);
    m /= static_cast<double>(ly.size());
    fit.intercept = std::exp(shift) * m;
    for (auto& p : pred) p = shift + std::log(m);
  } else {
    const auto line = detail::least_squares(x, y);
    fit.intercept = line.intercept;
    fit.exponent = line.slope;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double lin = line.intercept + line.slope * x[i];
      pred[i] = model == GrowthModel::double_exp ? std::exp(lin) : lin;
    }
  }
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (pred[i] - ly[i]) * (pred[i] - ly[i]);
  fit.residual = std::sqrt(s / static_cast<double>(x.size()));
  fit.valid = std::isfinite(fit.residual);
  return fit;
}

inline GrowthFit growth_fit(std::span<const double> t, std::span<const double> y, GrowthModel model) {
  std::vector<double> ly(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!(y[i] > 0.0)) throw ValidationError("growth_fit: log fits need y > 0");
    ly[i] = std::log(y[i]);
  }
  return growth_fit_log(t, ly, model);
}

struct Classification {
  GrowthModel best = GrowthModel::bounded;
  std::vector<GrowthFit> fits;
  /// true when a poly fit with k <= 0.05 or an exp/double-exp fit with rate <= 0.01 was relabeled bounded
  bool relabeled = false;

  const GrowthFit& fit(GrowthModel m) const {
    for (const auto& f : fits)
      if (f.model == m) return f;
    throw ValidationError(std::string("no fit for model ") + to_string(m));
  }
};

/// Simplest model whose residual is within 10% (plus 1e-3) of the smallest.
inline Classification classify_log(std::span<const double> t, std::span<const double> log_y) {
  Classification c;
  double best = kInfinity;
  for (auto m : {GrowthModel::bounded, GrowthModel::poly, GrowthModel::exp, GrowthModel::double_exp}) {
    c.fits.push_back(growth_fit_log(t, log_y, m));
    if (c.fits.back().valid) best = std::min(best, c.fits.back().residual);
  }
  for (const auto& f : c.fits) {
    if (f.valid && f.residual <= 1.1 * best + 1e-3) {
      c.best = f.model;
      break;
    }
  }
  const auto& chosen = c.fit(c.best);
  if ((c.best == GrowthModel::poly && chosen.exponent <= 0.05) ||
      ((c.best == GrowthModel::exp || c.best == GrowthModel::double_exp) && chosen.exponent <= 0.01)) {
    c.best = GrowthModel::bounded;
    c.relabeled = true;
  }
  return c;
}

inline Classification classify(std::span<const double> t, std::span<const double> y) {
  std::vector<double> ly(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!(y[i] > 0.0)) throw ValidationError("classify: series must be positive");
    ly[i] = std::log(y[i]);
  }
  return classify_log(t, ly);
}

}  // namespace tdnls
