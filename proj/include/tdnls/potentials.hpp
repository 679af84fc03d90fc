#pragma once

// Time-dependent external potentials V(t, x), a sampling falsifier for the
// at-most-quadratic hypothesis, and the limsup t^2 Omega(t) classifier.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "tdnls/errors.hpp"
#include "tdnls/grid.hpp"
#include "tdnls/time_function.hpp"

namespace tdnls {

using Mat3 = std::array<std::array<double, 3>, 3>;

/// V = 0
struct ZeroPotential {};

/// V = (1/2) Omega(t) |x|^2
struct IsotropicHarmonic {
  TimeFunction omega;
};

/// V = (1/2) <Q(t) x, x> with Q(t) = scale(t) * matrix, or an arbitrary callable.
struct MatrixHarmonic {
  Mat3 matrix{};
  TimeFunction scale = TimeFunction::constant(1.0);
  std::function<Mat3(double)> custom;

  Mat3 at(double t) const {
    if (custom) return custom(t);
    Mat3 q = matrix;
    const double s = scale(t);
    for (auto& row : q)
      for (auto& v : row) v *= s;
    return q;
  }
};

/// V = -|x|^2, the Omega = -2 member of the isotropic family.
struct RepulsivePotential {};

/// Arbitrary smooth V(t, x).
struct CustomPotential {
  std::function<double(double, const Point&)> value;
  bool time_independent = false;
};

using PotentialSpec = std::variant<ZeroPotential, IsotropicHarmonic, MatrixHarmonic, RepulsivePotential, CustomPotential>;

inline double squared_norm(const Point& x, int dim) {
  double s = 0.0;
  for (int a = 0; a < dim; ++a) s += x[a] * x[a];
  return s;
}

/// Isotropic frequency Omega(t) when V = (1/2) Omega(t) |x|^2; repulsive maps to -2.
inline std::optional<TimeFunction> isotropic_frequency(const PotentialSpec& spec) {
  if (const auto* h = std::get_if<IsotropicHarmonic>(&spec)) return h->omega;
  if (std::holds_alternative<RepulsivePotential>(spec)) return TimeFunction::constant(-2.0);
  if (std::holds_alternative<ZeroPotential>(spec)) return TimeFunction::constant(0.0);
  return std::nullopt;
}

inline bool is_time_independent(const PotentialSpec& spec) {
  struct Visitor {
    bool operator()(const ZeroPotential&) const { return true; }
    bool operator()(const RepulsivePotential&) const { return true; }
    bool operator()(const IsotropicHarmonic& h) const { return h.omega.is_constant(); }
    bool operator()(const MatrixHarmonic& m) const { return !m.custom && m.scale.is_constant(); }
    bool operator()(const CustomPotential& c) const { return c.time_independent; }
  };
  return std::visit(Visitor{}, spec);
}

inline void check_evaluable(const PotentialSpec& spec) {
  if (const auto* c = std::get_if<CustomPotential>(&spec); c && !c->value)
    throw ValidationError("potential: custom variant has no callable");
  if (const auto* h = std::get_if<IsotropicHarmonic>(&spec); h && !h->omega.evaluable())
    throw ValidationError("potential: isotropic frequency is not evaluable");
}

/// Point value V(t, x) in dimension dim.
inline double potential_value(const PotentialSpec& spec, double t, const Point& x, int dim) {
  struct Visitor {
    double t;
    const Point& x;
    int dim;
    double operator()(const ZeroPotential&) const { return 0.0; }
    double operator()(const RepulsivePotential&) const { return -squared_norm(x, dim); }
    double operator()(const IsotropicHarmonic& h) const { return 0.5 * h.omega(t) * squared_norm(x, dim); }
    double operator()(const MatrixHarmonic& m) const {
      const Mat3 q = m.at(t);
      double s = 0.0;
      for (int a = 0; a < dim; ++a)
        for (int b = 0; b < dim; ++b) s += q[a][b] * x[a] * x[b];
      return 0.5 * s;
    }
    double operator()(const CustomPotential& c) const { return c.value(t, x); }
  };
  return std::visit(Visitor{t, x, dim}, spec);
}

/// Gradient in x; exact for harmonic variants, central differences otherwise.
inline Point potential_gradient(const PotentialSpec& spec, double t, const Point& x, int dim) {
  Point g{0.0, 0.0, 0.0};
  if (std::holds_alternative<ZeroPotential>(spec)) return g;
  if (std::holds_alternative<RepulsivePotential>(spec)) {
    for (int a = 0; a < dim; ++a) g[a] = -2.0 * x[a];
    return g;
  }
  if (const auto* h = std::get_if<IsotropicHarmonic>(&spec)) {
    const double w = h->omega(t);
    for (int a = 0; a < dim; ++a) g[a] = w * x[a];
    return g;
  }
  if (const auto* m = std::get_if<MatrixHarmonic>(&spec)) {
    const Mat3 q = m->at(t);
    for (int a = 0; a < dim; ++a)
      for (int b = 0; b < dim; ++b) g[a] += 0.5 * (q[a][b] + q[b][a]) * x[b];
    return g;
  }
  const double h = 1e-5;
  for (int a = 0; a < dim; ++a) {
    Point xp = x, xm = x;
    xp[a] += h;
    xm[a] -= h;
    g[a] = (potential_value(spec, t, xp, dim) - potential_value(spec, t, xm, dim)) / (2.0 * h);
  }
  return g;
}

/// Partial derivative in t.
inline double potential_time_derivative(const PotentialSpec& spec, double t, const Point& x, int dim) {
  if (const auto* h = std::get_if<IsotropicHarmonic>(&spec))
    return 0.5 * h->omega.derivative(t) * squared_norm(x, dim);
  if (const auto* m = std::get_if<MatrixHarmonic>(&spec); m && !m->custom) {
    double s = 0.0;
    for (int a = 0; a < dim; ++a)
      for (int b = 0; b < dim; ++b) s += m->matrix[a][b] * x[a] * x[b];
    return 0.5 * m->scale.derivative(t) * s;
  }
  if (is_time_independent(spec)) return 0.0;
  const double h = 1e-5 * std::max(1.0, std::abs(t));
  return (potential_value(spec, t + h, x, dim) - potential_value(spec, t - h, x, dim)) / (2.0 * h);
}

/// V(t, .) sampled at every grid node. Throws std::out_of_range for tabulated
/// frequencies queried outside their time range.
inline RealField evaluate(const PotentialSpec& spec, double t, const SpatialGrid& grid) {
  if (t < 0.0) throw ValidationError("potential: evaluation time must be >= 0");
  check_evaluable(spec);
  RealField v(grid.size());
  for_each_node(grid, [&](std::size_t i, const Point& x) { v[i] = potential_value(spec, t, x, grid.dim()); });
  return v;
}

/// Repeated sampling of V(t, .) on a fixed grid. Harmonic variants reuse
/// precomputed quadratic monomials; other variants are evaluated pointwise.
class PotentialSampler {
 public:
  PotentialSampler(PotentialSpec spec, const SpatialGrid& grid) : spec_(std::move(spec)), grid_(grid) {
    check_evaluable(spec_);
    const int d = grid.dim();
    if (std::holds_alternative<ZeroPotential>(spec_)) {
      mode_ = Mode::zero;
    } else if (isotropic_frequency(spec_)) {
      mode_ = Mode::isotropic;
      omega_ = *isotropic_frequency(spec_);
      half_r2_.resize(grid.size());
      for_each_node(grid, [&](std::size_t i, const Point& x) { half_r2_[i] = 0.5 * squared_norm(x, d); });
    } else if (const auto* m = std::get_if<MatrixHarmonic>(&spec_)) {
      mode_ = Mode::matrix;
      matrix_ = *m;
      for (int a = 0; a < d; ++a)
        for (int b = a; b < d; ++b) {
          RealField p(grid.size());
          for_each_node(grid, [&](std::size_t i, const Point& x) { p[i] = x[a] * x[b]; });
          monomials_.push_back({a, b, std::move(p)});
        }
    } else {
      mode_ = Mode::pointwise;
    }
  }

  void sample(double t, RealField& out) const {
    out.resize(grid_.size());
    switch (mode_) {
      case Mode::zero:
        std::fill(out.begin(), out.end(), 0.0);
        return;
      case Mode::isotropic: {
        const double w = omega_(t);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = w * half_r2_[i];
        return;
      }
      case Mode::matrix: {
        const Mat3 q = matrix_.at(t);
        std::fill(out.begin(), out.end(), 0.0);
        for (const auto& m : monomials_) {
          const double c = m.a == m.b ? 0.5 * q[m.a][m.a] : 0.5 * (q[m.a][m.b] + q[m.b][m.a]);
          for (std::size_t i = 0; i < out.size(); ++i) out[i] += c * m.values[i];
        }
        return;
      }
      case Mode::pointwise:
        for_each_node(grid_, [&](std::size_t i, const Point& x) {
          out[i] = potential_value(spec_, t, x, grid_.dim());
        });
        return;
    }
  }

  bool is_zero() const { return mode_ == Mode::zero; }

 private:
  enum class Mode { zero, isotropic, matrix, pointwise };
  struct Monomial {
    int a, b;
    RealField values;
  };
  PotentialSpec spec_;
  SpatialGrid grid_;
  Mode mode_ = Mode::pointwise;
  TimeFunction omega_;
  MatrixHarmonic matrix_;
  RealField half_r2_;
  std::vector<Monomial> monomials_;
};

namespace detail {

// Eigenvalues of a symmetric matrix (n <= 3) by cyclic Jacobi rotations.
inline std::array<double, 3> symmetric_eigenvalues(Mat3 a, int n) {
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    if (off < 1e-30) break;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
      }
  }
  return {a[0][0], n > 1 ? a[1][1] : 0.0, n > 2 ? a[2][2] : 0.0};
}

inline double binomial(int m, int j) {
  double r = 1.0;
  for (int i = 1; i <= j; ++i) r = r * (m - j + i) / i;
  return r;
}

// Central finite-difference estimate of d^alpha V at (t, x) with step h.
inline double central_difference(const PotentialSpec& spec, double t, const Point& x, int dim,
                                 const MultiIndex& alpha, double h) {
  // Tensor product of 1D stencils sum_j (-1)^j C(m, j) f(x + (m/2 - j) h).
  double total = 0.0;
  std::array<int, 3> j{0, 0, 0};
  while (true) {
    Point y = x;
    double w = 1.0;
    for (int a = 0; a < dim; ++a) {
      const int m = alpha[a];
      y[a] += (0.5 * m - j[a]) * h;
      w *= ((j[a] % 2) ? -1.0 : 1.0) * binomial(m, j[a]) / std::pow(h, m);
    }
    total += w * potential_value(spec, t, y, dim);
    int a = 0;
    for (; a < dim; ++a) {
      if (++j[a] <= alpha[a]) break;
      j[a] = 0;
    }
    if (a == dim) break;
  }
  return total;
}

}  // namespace detail

struct AssumptionOptions {
  int max_order = 3;
  double step = 1e-3;
  /// A sampled sup above this counts as unbounded.
  double threshold = 100.0;
};

struct AssumptionReport {
  bool passes = false;
  /// order -> sampled sup. Order 2 reports the largest |eigenvalue| of the
  /// Hessian; higher orders the largest |d^alpha V| over |alpha| = order.
  std::map<int, double> worst_bounds;
  /// Sampled sup of |V(t, x)| over samples with |x| <= 1 (origin and unit axis points always included).
  double sup_unit_ball = 0.0;
  std::string failure;
};

/// Sampling falsifier for "d^alpha V bounded in (t, x) for |alpha| >= 2 and
/// sup_{|x|<=1} |V| bounded in t". A pass means no sample contradicts it.
inline AssumptionReport verify_assumption(const PotentialSpec& spec, int dim, const std::vector<double>& t_samples,
                                          const std::vector<Point>& x_samples,
                                          const AssumptionOptions& options = {}) {
  if (t_samples.empty() || x_samples.empty()) throw ValidationError("verify_assumption: empty sample set");
  if (options.max_order < 2) throw ValidationError("verify_assumption: max_order must be >= 2");
  if (dim < 1 || dim > 3) throw ValidationError("verify_assumption: dimension must be 1, 2 or 3");
  check_evaluable(spec);

  AssumptionReport report;
  const double h = options.step;
  for (int m = 2; m <= options.max_order; ++m) report.worst_bounds[m] = 0.0;

  std::vector<Point> unit_ball{Point{0.0, 0.0, 0.0}};
  for (int a = 0; a < dim; ++a) {
    Point e{0.0, 0.0, 0.0};
    e[a] = 1.0;
    unit_ball.push_back(e);
    e[a] = -1.0;
    unit_ball.push_back(e);
  }
  for (const auto& x : x_samples)
    if (squared_norm(x, dim) <= 1.0) unit_ball.push_back(x);

  bool finite = true;
  for (double t : t_samples) {
    for (const auto& x : x_samples) {
      Mat3 hess{};
      for (int a = 0; a < dim; ++a)
        for (int b = a; b < dim; ++b) {
          MultiIndex alpha{0, 0, 0};
          alpha[a] += 1;
          alpha[b] += 1;
          const double v = detail::central_difference(spec, t, x, dim, alpha, h);
          hess[a][b] = hess[b][a] = v;
        }
      const auto eig = detail::symmetric_eigenvalues(hess, dim);
      double spectral = 0.0;
      for (int a = 0; a < dim; ++a) spectral = std::max(spectral, std::abs(eig[a]));
      if (!std::isfinite(spectral)) finite = false;
      report.worst_bounds[2] = std::max(report.worst_bounds[2], spectral);
      for (int m = 3; m <= options.max_order; ++m) {
        for (const auto& alpha : multi_indices_of_order(dim, m)) {
          const double v = std::abs(detail::central_difference(spec, t, x, dim, alpha, h));
          if (!std::isfinite(v)) finite = false;
          report.worst_bounds[m] = std::max(report.worst_bounds[m], v);
        }
      }
    }
    for (const auto& x : unit_ball) {
      const double v = std::abs(potential_value(spec, t, x, dim));
      if (!std::isfinite(v)) finite = false;
      report.sup_unit_ball = std::max(report.sup_unit_ball, v);
    }
  }

  report.passes = finite;
  if (!finite) report.failure = "non-finite sample";
  for (const auto& [m, v] : report.worst_bounds) {
    if (report.passes && v > options.threshold) {
      report.passes = false;
      report.failure = "order-" + std::to_string(m) + " derivative sup " + std::to_string(v) + " exceeds threshold";
    }
  }
  if (report.passes && report.sup_unit_ball > options.threshold) {
    report.passes = false;
    report.failure = "sup |V| on the unit ball exceeds threshold";
  }
  return report;
}

enum class SharpnessRegime { non_oscillatory, oscillatory, inconclusive };

inline const char* to_string(SharpnessRegime r) {
  switch (r) {
    case SharpnessRegime::non_oscillatory:
      return "non_oscillatory";
    case SharpnessRegime::oscillatory:
      return "oscillatory";
    case SharpnessRegime::inconclusive:
      return "inconclusive";
  }
  return "?";
}

struct SharpnessReport {
  double limsup_estimate = 0.0;
  SharpnessRegime regime = SharpnessRegime::inconclusive;
};

/// Estimates limsup t^2 Omega(t) by the running sup over [T_max/2, T_max] and
/// compares it with the critical value 1/4.
inline SharpnessReport sharpness_classifier(const TimeFunction& omega, double t_max, double margin = 0.05,
                                            std::size_t samples = 10001) {
  if (!(t_max >= 100.0)) throw ValidationError("sharpness_classifier: horizon must be >= 100");
  if (samples < 2) throw ValidationError("sharpness_classifier: need at least two samples");
  SharpnessReport r;
  r.limsup_estimate = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < samples; ++i) {
    const double t = 0.5 * t_max + 0.5 * t_max * static_cast<double>(i) / static_cast<double>(samples - 1);
    r.limsup_estimate = std::max(r.limsup_estimate, t * t * omega(t));
  }
  if (r.limsup_estimate < 0.25 - margin)
    r.regime = SharpnessRegime::non_oscillatory;
  else if (r.limsup_estimate > 0.25 + margin)
    r.regime = SharpnessRegime::oscillatory;
  else
    r.regime = SharpnessRegime::inconclusive;
  return r;
}

}  // namespace tdnls
