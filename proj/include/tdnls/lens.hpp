#pragma once

// Hill equation  x'' + Omega(t) x = 0: fundamental pairs with unit Wronskian,
// the fixed-point construction of the pair normalized at infinity, and the
// lens transform
//   u(t, x) = b^{-d/2} v(zeta(t), x/b) e^{i a |x|^2 / 2},  a = nu'/nu, b = nu, zeta = mu/nu.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/quadrature/tanh_sinh.hpp>

#include "tdnls/errors.hpp"
#include "tdnls/grid.hpp"
#include "tdnls/model.hpp"
#include "tdnls/resample.hpp"
#include "tdnls/time_function.hpp"

namespace tdnls {

struct HillState {
  double mu = 0.0;
  double mu_dot = 1.0;
  double nu = 1.0;
  double nu_dot = 0.0;

  double wronskian() const { return nu * mu_dot - nu_dot * mu; }
};

namespace detail {

struct HermiteValue {
  double value, derivative;
};

inline HermiteValue hermite(double t0, double t1, double y0, double y1, double d0, double d1, double t) {
  const double h = t1 - t0;
  const double s = (t - t0) / h;
  const double s2 = s * s, s3 = s2 * s;
  const double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s, h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
  const double value = h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1;
  const double dh00 = 6 * s2 - 6 * s, dh10 = 3 * s2 - 4 * s + 1, dh01 = -6 * s2 + 6 * s, dh11 = 3 * s2 - 2 * s;
  const double deriv = (dh00 * y0 + dh01 * y1) / h + dh10 * d0 + dh11 * d1;
  return {value, deriv};
}

}  // namespace detail

/// Sampled fundamental pair (mu, nu) with cubic Hermite dense output.
class HillSolution {
 public:
  HillSolution(std::vector<double> times, std::vector<HillState> states, std::vector<double> omega)
      : t_(std::move(times)), s_(std::move(states)), omega_(std::move(omega)) {
    if (t_.size() < 2 || t_.size() != s_.size() || t_.size() != omega_.size())
      throw ValidationError("HillSolution: need >= 2 matching samples");
    for (std::size_t i = 1; i < t_.size(); ++i)
      if (!(t_[i] > t_[i - 1])) throw ValidationError("HillSolution: times must be strictly increasing");
  }

  std::size_t size() const { return t_.size(); }
  const std::vector<double>& times() const { return t_; }
  const std::vector<HillState>& states() const { return s_; }
  const std::vector<double>& omega_samples() const { return omega_; }
  double t_min() const { return t_.front(); }
  double t_max() const { return t_.back(); }

  /// Dense output; mu and nu use (x, x') Hermite data, their derivatives use (x', -Omega x).
  HillState at(double t) const { return eval(t).state; }

  double zeta(double t) const {
    const auto s = at(t);
    return s.mu / s.nu;
  }
  double a(double t) const {
    const auto s = at(t);
    return s.nu_dot / s.nu;
  }
  double b(double t) const { return at(t).nu; }

  double max_wronskian_defect() const {
    double m = 0.0;
    for (const auto& s : s_) m = std::max(m, std::abs(s.wronskian() - 1.0));
    return m;
  }

  double min_nu() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& s : s_) m = std::min(m, s.nu);
    return m;
  }

  struct Dense {
    HillState state;
    /// Time derivatives of the Hermite interpolants of nu and nu'.
    double nu_slope, nu_dot_slope, mu_slope;
  };

  Dense eval(double t) const {
    if (t < t_.front() || t > t_.back())
      throw std::out_of_range("HillSolution queried at t=" + std::to_string(t) + " outside [" +
                              std::to_string(t_.front()) + ", " + std::to_string(t_.back()) + "]");
    auto it = std::upper_bound(t_.begin(), t_.end(), t);
    std::size_t i = static_cast<std::size_t>(it - t_.begin());
    if (i >= t_.size()) i = t_.size() - 1;
    const std::size_t j = i - 1;
    const auto& p = s_[j];
    const auto& q = s_[i];
    const double w0 = omega_[j], w1 = omega_[i];
    const auto mu = detail::hermite(t_[j], t_[i], p.mu, q.mu, p.mu_dot, q.mu_dot, t);
    const auto mud = detail::hermite(t_[j], t_[i], p.mu_dot, q.mu_dot, -w0 * p.mu, -w1 * q.mu, t);
    const auto nu = detail::hermite(t_[j], t_[i], p.nu, q.nu, p.nu_dot, q.nu_dot, t);
    const auto nud = detail::hermite(t_[j], t_[i], p.nu_dot, q.nu_dot, -w0 * p.nu, -w1 * q.nu, t);
    return {{mu.value, mud.value, nu.value, nud.value}, nu.derivative, nud.derivative, mu.derivative};
  }

 private:
  std::vector<double> t_;
  std::vector<HillState> s_;
  std::vector<double> omega_;
};

inline std::vector<double> uniform_mesh(double t0, double t1, double h) {
  if (!(h > 0.0)) throw ValidationError("mesh step must be positive");
  const auto n = static_cast<std::size_t>(std::max(1.0, std::ceil(std::abs(t1 - t0) / h - 1e-9)));
  std::vector<double> m(n + 1);
  for (std::size_t i = 0; i <= n; ++i) m[i] = t0 + (t1 - t0) * static_cast<double>(i) / static_cast<double>(n);
  m.back() = t1;
  return m;
}

/// Classical RK4 along mesh (increasing or decreasing), starting from the
/// state at mesh.front(). Throws NumericalGuardError at a zero of nu.
inline HillSolution solve_hill(const TimeFunction& omega, const HillState& initial, const std::vector<double>& mesh) {
  if (mesh.size() < 2) throw ValidationError("solve_hill: mesh needs at least two points");
  if (std::abs(initial.wronskian() - 1.0) > 1e-6)
    throw ValidationError("solve_hill: initial data must have unit Wronskian nu mu' - nu' mu = 1");
  if (!(initial.nu > 0.0)) throw ValidationError("solve_hill: nu must be positive at the initial time");
  const bool forward = mesh.back() > mesh.front();
  for (std::size_t i = 1; i < mesh.size(); ++i)
    if (forward ? !(mesh[i] > mesh[i - 1]) : !(mesh[i] < mesh[i - 1]))
      throw ValidationError("solve_hill: mesh must be strictly monotone");

  std::vector<HillState> states{initial};
  std::vector<double> om{omega(mesh.front())};
  HillState y = initial;
  for (std::size_t i = 1; i < mesh.size(); ++i) {
    const double t = mesh[i - 1], h = mesh[i] - t;
    const double w0 = omega(t), wm = omega(t + 0.5 * h), w1 = omega(t + h);
    auto rhs = [](const HillState& s, double w) { return HillState{s.mu_dot, -w * s.mu, s.nu_dot, -w * s.nu}; };
    auto add = [](const HillState& s, const HillState& k, double c) {
      return HillState{s.mu + c * k.mu, s.mu_dot + c * k.mu_dot, s.nu + c * k.nu, s.nu_dot + c * k.nu_dot};
    };
    const HillState k1 = rhs(y, w0);
    const HillState k2 = rhs(add(y, k1, 0.5 * h), wm);
    const HillState k3 = rhs(add(y, k2, 0.5 * h), wm);
    const HillState k4 = rhs(add(y, k3, h), w1);
    HillState next{y.mu + h / 6 * (k1.mu + 2 * k2.mu + 2 * k3.mu + k4.mu),
                   y.mu_dot + h / 6 * (k1.mu_dot + 2 * k2.mu_dot + 2 * k3.mu_dot + k4.mu_dot),
                   y.nu + h / 6 * (k1.nu + 2 * k2.nu + 2 * k3.nu + k4.nu),
                   y.nu_dot + h / 6 * (k1.nu_dot + 2 * k2.nu_dot + 2 * k3.nu_dot + k4.nu_dot)};
    if (!(next.nu > 0.0)) {
      const double where = t + h * y.nu / (y.nu - next.nu);
      throw NumericalGuardError("solve_hill: nu vanishes near t=" + std::to_string(where), where);
    }
    y = next;
    states.push_back(y);
    om.push_back(w1);
  }
  std::vector<double> times = mesh;
  if (!forward) {
    std::reverse(times.begin(), times.end());
    std::reverse(states.begin(), states.end());
    std::reverse(om.begin(), om.end());
  }
  return HillSolution(std::move(times), std::move(states), std::move(om));
}

struct PairOptions {
  double T = 20.0;
  /// Truncation horizon; 0 means 100 T. Must be >= 10 T.
  double T_max = 0.0;
  std::size_t panels = 4000;
  double tol = 1e-13;
  int max_iterations = 200;
  double contraction_limit = 0.9;
};

struct ScatteringPair {
  explicit ScatteringPair(HillSolution s) : solution(std::move(s)) {}

  HillSolution solution;
  double T = 0.0;
  double T_max = 0.0;
  /// Numerical estimate of int_T^infty (t - T)|Omega(t)| dt.
  double contraction = 0.0;
  /// C T_max^{2-gamma}/(gamma-2) when Omega has a catalog decay bound.
  std::optional<double> tail_bound;
  /// Limit at infinity of the raw fixed point nu (normalized by nu(T) = 1); the stored nu is divided by it.
  double nu_limit = 1.0;
  int iterations_nu = 0;
  int iterations_mu = 0;
  double residual_nu = 0.0;
  double residual_mu = 0.0;
  double wronskian_defect = 0.0;
};

namespace detail {

// Composite Simpson on panels [p_{2i}, p_{2i+2}] with midpoints p_{2i+1};
// cumulative values at midpoints use the half-panel rule (k/12)(5 f_a + 8 f_m - f_b).
inline std::vector<double> cumulative_simpson(const std::vector<double>& p, const std::vector<double>& f) {
  std::vector<double> out(p.size(), 0.0);
  for (std::size_t j = 0; j + 2 < p.size(); j += 2) {
    const double H = p[j + 2] - p[j];
    const double k = 0.5 * H;
    out[j + 1] = out[j] + k / 12.0 * (5 * f[j] + 8 * f[j + 1] - f[j + 2]);
    out[j + 2] = out[j] + H / 6.0 * (f[j] + 4 * f[j + 1] + f[j + 2]);
  }
  return out;
}

// int_{T_max}^infty f(s) ds via s = T_max/u on (0, 1].
template <class F>
double tail_integral(F&& f, double t_max) {
  boost::math::quadrature::tanh_sinh<double> ts;
  auto g = [&](double u) {
    if (u < 1e-100) return 0.0;
    const double s = t_max / u;
    return f(s) * t_max / (u * u);
  };
  return ts.integrate(g, 0.0, 1.0);
}

}  // namespace detail

/// Fixed point z = r_T + P_T z for nu = 1 + z (g = Omega) and mu = t + z
/// (g = t Omega) on a geometric Simpson mesh over [T, T_max], with the
/// integrals beyond T_max taken with z frozen at z(T_max). The returned nu is
/// rescaled to tend to 1, so nu(T) = 1/nu_limit.
inline ScatteringPair construct_scattering_pair(const TimeFunction& omega, PairOptions opt = {}) {
  if (!(opt.T > 0.0)) throw ValidationError("construct_scattering_pair: T must be positive");
  if (opt.T_max == 0.0) opt.T_max = 100.0 * opt.T;
  if (!(opt.T_max >= 10.0 * opt.T)) throw ValidationError("construct_scattering_pair: T_max must be >= 10 T");
  if (opt.panels < 2) throw ValidationError("construct_scattering_pair: need at least two panels");
  const auto decay = omega.decay();
  if (decay && decay->amplitude > 0.0 && !(decay->gamma > 2.0))
    throw ValidationError("construct_scattering_pair: |Omega| <= C<t>^{-gamma} needs gamma > 2");

  const double T = opt.T, Tm = opt.T_max;
  const std::size_t N = opt.panels;
  std::vector<double> p(2 * N + 1);
  const double ratio = std::pow(Tm / T, 1.0 / static_cast<double>(N));
  double node = T;
  for (std::size_t i = 0; i < N; ++i) {
    const double next = i + 1 == N ? Tm : node * ratio;
    p[2 * i] = node;
    p[2 * i + 1] = 0.5 * (node + next);
    node = next;
  }
  p[2 * N] = Tm;

  std::vector<double> w(p.size());
  for (std::size_t j = 0; j < p.size(); ++j) w[j] = omega(p[j]);

  ScatteringPair out(HillSolution({0.0, 1.0}, {HillState{}, HillState{}}, {0.0, 0.0}));
  out.T = T;
  out.T_max = Tm;
  {
    std::vector<double> f(p.size());
    for (std::size_t j = 0; j < p.size(); ++j) f[j] = (p[j] - T) * std::abs(w[j]);
    out.contraction = detail::cumulative_simpson(p, f).back() +
                      detail::tail_integral([&](double s) { return (s - T) * std::abs(omega(s)); }, Tm);
  }
  if (!(out.contraction < opt.contraction_limit))
    throw ValidationError("construct_scattering_pair: contraction estimate " + std::to_string(out.contraction) +
                          " >= " + std::to_string(opt.contraction_limit) + "; increase T");
  if (decay && decay->amplitude > 0.0)
    out.tail_bound = decay->amplitude * std::pow(Tm, 2.0 - decay->gamma) / (decay->gamma - 2.0);

  const double tail_omega = detail::tail_integral([&](double s) { return omega(s); }, Tm);

  struct Solved {
    std::vector<double> z, zdot;
    int iterations;
    double residual;
  };
  // F(h)(t) = int_T^t (s - T) h ds + (t - T) int_t^infty h ds;  F(h)' = int_t^infty h ds.
  auto solve = [&](const std::vector<double>& g, double tail_g, bool weighted) {
    auto apply = [&](const std::vector<double>& z, std::vector<double>* zdot) {
      std::vector<double> h(p.size()), sh(p.size());
      for (std::size_t j = 0; j < p.size(); ++j) {
        h[j] = g[j] + w[j] * z[j];
        sh[j] = (p[j] - T) * h[j];
      }
      const auto I = detail::cumulative_simpson(p, h);
      const auto A = detail::cumulative_simpson(p, sh);
      const double beyond = tail_g + z.back() * tail_omega;
      std::vector<double> out_z(p.size());
      for (std::size_t j = 0; j < p.size(); ++j) {
        const double rest = I.back() - I[j] + beyond;
        out_z[j] = A[j] + (p[j] - T) * rest;
        if (zdot) (*zdot)[j] = rest;
      }
      return out_z;
    };
    auto distance = [&](const std::vector<double>& a, const std::vector<double>& b) {
      double m = 0.0;
      for (std::size_t j = 1; j < p.size(); ++j) {
        const double d = std::abs(a[j] - b[j]);
        m = std::max(m, weighted ? d / (p[j] - T) : d);
      }
      return m;
    };
    Solved s{std::vector<double>(p.size(), 0.0), std::vector<double>(p.size(), 0.0), 0, 0.0};
    for (int it = 1; it <= opt.max_iterations; ++it) {
      auto next = apply(s.z, nullptr);
      const double diff = distance(next, s.z);
      s.z = std::move(next);
      s.iterations = it;
      if (diff <= opt.tol) break;
      if (it == opt.max_iterations)
        throw NumericalGuardError("construct_scattering_pair: fixed-point iteration did not converge", T);
    }
    const auto check = apply(s.z, &s.zdot);
    s.residual = distance(check, s.z);
    return s;
  };

  std::vector<double> g_mu(p.size());
  for (std::size_t j = 0; j < p.size(); ++j) g_mu[j] = p[j] * w[j];
  const double tail_t_omega = detail::tail_integral([&](double s) { return s * omega(s); }, Tm);

  const Solved nu = solve(w, tail_omega, false);
  const Solved mu = solve(g_mu, tail_t_omega, true);
  out.iterations_nu = nu.iterations;
  out.iterations_mu = mu.iterations;
  out.residual_nu = nu.residual;
  out.residual_mu = mu.residual;

  // z_nu tends to int_T^infty (s - T) Omega nu ds, not 0; dividing by the limit gives nu -> 1 and W = 1.
  {
    std::vector<double> sh(p.size());
    for (std::size_t j = 0; j < p.size(); ++j) sh[j] = (p[j] - T) * w[j] * (1.0 + nu.z[j]);
    const double beyond =
        (1.0 + nu.z.back()) * detail::tail_integral([&](double s) { return (s - T) * omega(s); }, Tm);
    out.nu_limit = 1.0 + detail::cumulative_simpson(p, sh).back() + beyond;
  }
  std::vector<HillState> states(p.size());
  for (std::size_t j = 0; j < p.size(); ++j) {
    states[j] = {p[j] + mu.z[j], 1.0 + mu.zdot[j], (1.0 + nu.z[j]) / out.nu_limit, nu.zdot[j] / out.nu_limit};
    if (!(states[j].nu > 0.0))
      throw NumericalGuardError("construct_scattering_pair: nu vanishes; increase T", p[j]);
  }
  out.solution = HillSolution(p, std::move(states), w);
  out.wronskian_defect = out.solution.max_wronskian_defect();
  if (out.wronskian_defect > 1e-6)
    throw NumericalGuardError("construct_scattering_pair: Wronskian defect " + std::to_string(out.wronskian_defect) +
                                  " exceeds 1e-6; refine panels or raise T_max",
                              T);
  return out;
}

/// Integrates the pair backward from its first mesh time to t0 and joins the pieces.
inline HillSolution extend_backward(const HillSolution& hill, const TimeFunction& omega, double t0, double h = 1e-3) {
  if (!(t0 < hill.t_min())) return hill;
  HillSolution back = solve_hill(omega, hill.states().front(), uniform_mesh(hill.t_min(), t0, h));
  std::vector<double> t = back.times();
  std::vector<HillState> s = back.states();
  std::vector<double> w = back.omega_samples();
  t.pop_back();
  s.pop_back();
  w.pop_back();
  t.insert(t.end(), hill.times().begin(), hill.times().end());
  s.insert(s.end(), hill.states().begin(), hill.states().end());
  w.insert(w.end(), hill.omega_samples().begin(), hill.omega_samples().end());
  return HillSolution(std::move(t), std::move(s), std::move(w));
}

/// Fritsch-Carlson monotone piecewise cubic Hermite interpolant.
class MonotoneCubic {
 public:
  MonotoneCubic(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
    const std::size_t n = x_.size();
    if (n < 2 || n != y_.size()) throw ValidationError("MonotoneCubic: need >= 2 matching samples");
    std::vector<double> delta(n - 1);
    bool up = false, down = false;
    for (std::size_t k = 0; k + 1 < n; ++k) {
      if (!(x_[k + 1] > x_[k])) throw ValidationError("MonotoneCubic: abscissae must be strictly increasing");
      delta[k] = (y_[k + 1] - y_[k]) / (x_[k + 1] - x_[k]);
      up = up || delta[k] > 0.0;
      down = down || delta[k] < 0.0;
    }
    if (up && down) throw ValidationError("MonotoneCubic: data are not monotone");
    m_.assign(n, 0.0);
    m_[0] = delta[0];
    m_[n - 1] = delta[n - 2];
    for (std::size_t k = 1; k + 1 < n; ++k)
      m_[k] = delta[k - 1] * delta[k] <= 0.0 ? 0.0 : 0.5 * (delta[k - 1] + delta[k]);
    for (std::size_t k = 0; k + 1 < n; ++k) {
      if (delta[k] == 0.0) {
        m_[k] = m_[k + 1] = 0.0;
        continue;
      }
      const double a = m_[k] / delta[k], b = m_[k + 1] / delta[k];
      if (a < 0.0) m_[k] = 0.0;
      if (b < 0.0) m_[k + 1] = 0.0;
      const double r = a * a + b * b;
      if (r > 9.0) {
        const double tau = 3.0 / std::sqrt(r);
        m_[k] = tau * a * delta[k];
        m_[k + 1] = tau * b * delta[k];
      }
    }
  }

  double x_min() const { return x_.front(); }
  double x_max() const { return x_.back(); }

  double operator()(double x) const {
    if (x < x_.front() || x > x_.back())
      throw std::out_of_range("MonotoneCubic: x=" + std::to_string(x) + " outside the sample range");
    auto it = std::upper_bound(x_.begin(), x_.end(), x);
    std::size_t i = static_cast<std::size_t>(it - x_.begin());
    if (i >= x_.size()) i = x_.size() - 1;
    return detail::hermite(x_[i - 1], x_[i], y_[i - 1], y_[i], m_[i - 1], m_[i], x).value;
  }

 private:
  std::vector<double> x_, y_, m_;
};

struct LensResiduals {
  /// |b' - a b| at interval midpoints
  double b_equation = 0.0;
  /// |a' + a^2 + Omega|
  double a_equation = 0.0;
  /// |zeta' - 1/b^2|
  double zeta_equation = 0.0;
  /// |b^{d sigma - 2} H(zeta) - 1| on the mesh (relative)
  double h_identity = 0.0;

  double max() const { return std::max({b_equation, a_equation, zeta_equation, h_identity}); }
};

/// Lens data of one Hill pair: zeta, its monotone inverse, H(s) = nu(zeta^{-1}(s))^{2 - d sigma}
/// and H'(s) = (2 - d sigma) nu^{3 - d sigma} nu' at zeta^{-1}(s).
class LensMap {
 public:
  LensMap(HillSolution hill, int dim, double sigma) : hill_(std::move(hill)), dim_(dim), sigma_(sigma) {
    if (dim < 1 || dim > 3) throw ValidationError("LensMap: dimension must be 1, 2 or 3");
    if (!(sigma > 0.0)) throw ValidationError("LensMap: sigma must be positive");
    if (!(hill_.min_nu() > 0.0)) throw ValidationError("LensMap: nu must stay positive on the mesh");
    const double e = exponent();
    for (const auto& s : hill_.states()) {
      zeta_.push_back(s.mu / s.nu);
      h_.push_back(std::pow(s.nu, e));
      hdot_.push_back(e == 0.0 ? 0.0 : e * std::pow(s.nu, e + 1.0) * s.nu_dot);
    }
    for (std::size_t i = 1; i < zeta_.size(); ++i)
      if (!(zeta_[i] > zeta_[i - 1])) throw ValidationError("LensMap: zeta is not strictly increasing on the mesh");
    inverse_ = std::make_shared<MonotoneCubic>(zeta_, hill_.times());
  }

  const HillSolution& hill() const { return hill_; }
  int dim() const { return dim_; }
  double sigma() const { return sigma_; }
  double exponent() const { return 2.0 - dim_ * sigma_; }

  double t_min() const { return hill_.t_min(); }
  double t_max() const { return hill_.t_max(); }
  double s_min() const { return zeta_.front(); }
  double s_max() const { return zeta_.back(); }

  const std::vector<double>& zeta_samples() const { return zeta_; }
  const std::vector<double>& H_samples() const { return h_; }
  const std::vector<double>& H_dot_samples() const { return hdot_; }

  double zeta(double t) const { return hill_.zeta(t); }
  double a(double t) const { return hill_.a(t); }
  double b(double t) const { return hill_.b(t); }

  /// Monotone cubic inverse of zeta, polished by Newton steps on the dense output (zeta' = 1/nu^2).
  double zeta_inverse(double s) const {
    if (s < s_min() || s > s_max())
      throw ValidationError("LensMap: s=" + std::to_string(s) + " outside the zeta image [" +
                            std::to_string(s_min()) + ", " + std::to_string(s_max()) + "]");
    double t = (*inverse_)(s);
    for (int k = 0; k < 3; ++k) {
      const auto st = hill_.at(t);
      const double next = std::clamp(t - (st.mu / st.nu - s) * st.nu * st.nu, t_min(), t_max());
      if (next == t) break;
      t = next;
    }
    return t;
  }

  double H(double s) const {
    if (exponent() == 0.0) return 1.0;
    return std::pow(hill_.b(zeta_inverse(s)), exponent());
  }

  double H_dot(double s) const {
    const double e = exponent();
    if (e == 0.0) return 0.0;
    const auto st = hill_.at(zeta_inverse(s));
    return e * std::pow(st.nu, e + 1.0) * st.nu_dot;
  }

  LensResiduals residuals() const {
    LensResiduals r;
    const auto& t = hill_.times();
    for (std::size_t i = 0; i + 1 < t.size(); ++i) {
      const double tm = 0.5 * (t[i] + t[i + 1]);
      const auto d = hill_.eval(tm);
      const double a = d.state.nu_dot / d.state.nu, b = d.state.nu;
      const double w = omega_between(i, tm);
      const double scale = std::max(1.0, std::abs(a * b));
      r.b_equation = std::max(r.b_equation, std::abs(d.nu_slope - a * b) / scale);
      const double adot = d.nu_dot_slope / b - a * a;
      r.a_equation = std::max(r.a_equation, std::abs(adot + a * a + w) / std::max(1.0, std::abs(w) + a * a));
      const double zdot = (d.mu_slope * b - d.state.mu * d.nu_slope) / (b * b);
      r.zeta_equation = std::max(r.zeta_equation, std::abs(zdot - 1.0 / (b * b)) * b * b);
    }
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double b = hill_.states()[i].nu;
      r.h_identity = std::max(r.h_identity, std::abs(std::pow(b, -exponent()) * H(zeta_[i]) - 1.0));
    }
    return r;
  }

 private:
  // Cubic Lagrange interpolation of the stored Omega samples around interval i.
  double omega_between(std::size_t i, double t) const {
    const auto& x = hill_.times();
    const auto& w = hill_.omega_samples();
    const std::size_t n = x.size();
    std::size_t lo = i > 0 ? i - 1 : 0;
    if (lo + 4 > n) lo = n >= 4 ? n - 4 : 0;
    const std::size_t hi = std::min(n, lo + 4);
    double sum = 0.0;
    for (std::size_t j = lo; j < hi; ++j) {
      double l = 1.0;
      for (std::size_t k = lo; k < hi; ++k)
        if (k != j) l *= (t - x[k]) / (x[j] - x[k]);
      sum += l * w[j];
    }
    return sum;
  }

  HillSolution hill_;
  int dim_;
  double sigma_;
  std::vector<double> zeta_, h_, hdot_;
  std::shared_ptr<const MonotoneCubic> inverse_;
};

/// c(s) = H(s) of the v-equation  i v_s + (1/2) Lap v = H(s) |v|^{2 sigma} v.
inline Nonlinearity lens_nonlinearity(std::shared_ptr<const LensMap> map) {
  return Nonlinearity::of(TimeFunction::custom([map](double s) { return map->H(s); },
                                               [map](double s) { return map->H_dot(s); }));
}

namespace detail {

// out(x) = scale * f(x / stretch) * exp(i chirp |x|^2 / 2), zero where x / stretch leaves f's box.
inline ComplexField rescale_field(const ComplexField& f, const SpatialGrid& out_grid, double stretch, double scale,
                                  double chirp, double mass_tolerance, const char* what) {
  const auto& g = f.grid();
  if (g.dim() != out_grid.dim()) throw ValidationError(std::string(what) + ": grid dimensions differ");
  const int d = g.dim();
  double outside = 0.0;
  for_each_node(g, [&](std::size_t i, const Point& y) {
    for (int a = 0; a < d; ++a)
      if (y[a] * stretch < -out_grid.half_width(a) || y[a] * stretch >= out_grid.half_width(a)) {
        outside += std::norm(f[i]);
        break;
      }
  });
  const double m = mass(f);
  outside *= g.cell_volume();
  if (m > 0.0 && outside > mass_tolerance * m)
    throw ValidationError(std::string(what) + ": rescaled coordinates exit the box (boundary mass fraction " +
                          std::to_string(outside / m) + ")");
  AxisTargets targets = mapped_axis_nodes(out_grid, [&](double x) { return x / stretch; });
  std::array<std::vector<char>, 3> inside;
  for (int a = 0; a < d; ++a)
    for (double y : targets[a]) inside[a].push_back(y >= -g.half_width(a) && y < g.half_width(a));
  auto values = interpolate_at(f, targets);
  ComplexField out(out_grid, std::move(values));
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto idx = out_grid.unflatten(i);
    bool keep = true;
    double r2 = 0.0;
    for (int a = 0; a < d; ++a) {
      keep = keep && inside[a][idx[a]];
      const double x = out_grid.node(a, idx[a]);
      r2 += x * x;
    }
    out[i] = keep ? out[i] * scale * std::polar(1.0, 0.5 * chirp * r2) : Complex(0.0, 0.0);
  }
  return out;
}

}  // namespace detail

/// u(t, .) from v(zeta(t), .). The output grid defaults to v's grid.
inline ComplexField lens_forward(const ComplexField& v, const LensMap& map, double t,
                                 std::optional<SpatialGrid> out_grid = std::nullopt, double mass_tolerance = 1e-8) {
  const double b = map.b(t), a = map.a(t);
  const int d = v.grid().dim();
  if (d != map.dim()) throw ValidationError("lens_forward: field dimension differs from the map's");
  return detail::rescale_field(v, out_grid.value_or(v.grid()), b, std::pow(b, -0.5 * d), a, mass_tolerance,
                               "lens_forward");
}

/// v(zeta(t), .) from u(t, .): v(y) = b^{d/2} u(b y) e^{-i a b^2 |y|^2 / 2}.
inline ComplexField lens_inverse(const ComplexField& u, const LensMap& map, double t,
                                 std::optional<SpatialGrid> out_grid = std::nullopt, double mass_tolerance = 1e-8) {
  const double b = map.b(t), a = map.a(t);
  const int d = u.grid().dim();
  if (d != map.dim()) throw ValidationError("lens_inverse: field dimension differs from the map's");
  return detail::rescale_field(u, out_grid.value_or(u.grid()), 1.0 / b, std::pow(b, 0.5 * d), -a * b * b,
                               mass_tolerance, "lens_inverse");
}

/// CSV with columns t, mu, mu_dot, nu, nu_dot, W, zeta, H where H is H(zeta(t)) = nu^{2 - d sigma}.
inline void write_hill_csv(std::ostream& os, const HillSolution& hill, int dim, double sigma) {
  os << "t,mu,mu_dot,nu,nu_dot,W,zeta,H\n";
  char buf[512];
  for (std::size_t i = 0; i < hill.size(); ++i) {
    const auto& s = hill.states()[i];
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", hill.times()[i], s.mu,
                  s.mu_dot, s.nu, s.nu_dot, s.wronskian(), s.mu / s.nu, std::pow(s.nu, 2.0 - dim * sigma));
    os << buf;
  }
}

}  // namespace tdnls
