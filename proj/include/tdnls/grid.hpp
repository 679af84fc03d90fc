#pragma once

// Periodic spectral grid on [-L, L)^d, unitary DFTs and quadrature norms.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <fftw3.h>

#include "tdnls/errors.hpp"

namespace tdnls {

using Complex = std::complex<double>;
using Point = std::array<double, 3>;
using MultiIndex = std::array<int, 3>;
using RealField = std::vector<double>;

inline constexpr std::size_t kDefaultMaxPoints = std::size_t{1} << 24;
inline constexpr int kMaxDerivativeOrder = 8;

inline int order(const MultiIndex& m) { return m[0] + m[1] + m[2]; }

namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

// In-place complex DFT plans for one grid shape. Plans are created with
// FFTW_UNALIGNED so they can be executed on any buffer of the right size.
class FftPlan {
 public:
  explicit FftPlan(std::vector<int> shape) : shape_(std::move(shape)) {
    std::size_t total = 1;
    for (int n : shape_) total *= static_cast<std::size_t>(n);
    std::lock_guard lock(fftw_planner_mutex());
    fftw_complex* scratch = fftw_alloc_complex(total);
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    const int rank = static_cast<int>(shape_.size());
    forward_ = fftw_plan_dft(rank, shape_.data(), scratch, scratch, FFTW_FORWARD, flags);
    backward_ = fftw_plan_dft(rank, shape_.data(), scratch, scratch, FFTW_BACKWARD, flags);
    fftw_free(scratch);
  }
  FftPlan(const FftPlan&) = delete;
  FftPlan& operator=(const FftPlan&) = delete;
  ~FftPlan() {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(backward_);
  }

  void forward(Complex* data) const {
    auto* p = reinterpret_cast<fftw_complex*>(data);
    fftw_execute_dft(forward_, p, p);
  }
  void backward(Complex* data) const {
    auto* p = reinterpret_cast<fftw_complex*>(data);
    fftw_execute_dft(backward_, p, p);
  }

 private:
  std::vector<int> shape_;
  fftw_plan forward_{};
  fftw_plan backward_{};
};

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

}  // namespace detail

/// Periodic box [-L_a, L_a) on each axis with n_a nodes, n_a a power of two.
///
/// Nodes are x_j = -L + j dx with dx = 2L/n; wavenumbers follow DFT order,
/// xi_k = (pi/L) k for k in [0, n/2) and (pi/L)(k - n) for k in [n/2, n).
/// Copies share the transform plans.
class SpatialGrid {
 public:
  SpatialGrid(int dim, std::size_t n, double half_width, std::size_t max_points = kDefaultMaxPoints)
      : SpatialGrid(dim, std::array<std::size_t, 3>{n, n, n}, Point{half_width, half_width, half_width},
                    max_points) {}

  SpatialGrid(int dim, std::array<std::size_t, 3> n, Point half_width,
              std::size_t max_points = kDefaultMaxPoints)
      : dim_(dim) {
    if (dim < 1 || dim > 3) throw ValidationError("grid: dimension must be 1, 2 or 3");
    std::size_t total = 1;
    std::vector<int> shape;
    for (int a = 0; a < 3; ++a) {
      if (a >= dim) {
        n_[a] = 1;
        half_width_[a] = 0.0;
        continue;
      }
      if (n[a] < 8 || !detail::is_power_of_two(n[a]))
        throw ValidationError("grid: points per axis must be a power of two >= 8, got " +
                              std::to_string(n[a]));
      if (!(half_width[a] > 0.0) || !std::isfinite(half_width[a]))
        throw ValidationError("grid: half-width must be positive and finite");
      n_[a] = n[a];
      half_width_[a] = half_width[a];
      total *= n[a];
      shape.push_back(static_cast<int>(n[a]));
    }
    if (total > max_points)
      throw ValidationError("grid: " + std::to_string(total) + " points exceed the memory budget of " +
                            std::to_string(max_points));
    size_ = total;
    plan_ = std::make_shared<detail::FftPlan>(std::move(shape));
  }

  int dim() const { return dim_; }
  std::size_t points(int axis) const { return n_[axis]; }
  double half_width(int axis) const { return half_width_[axis]; }
  double spacing(int axis) const { return 2.0 * half_width_[axis] / static_cast<double>(n_[axis]); }
  std::size_t size() const { return size_; }

  /// Quadrature weight dx_1 ... dx_d of the rectangle rule.
  double cell_volume() const {
    double v = 1.0;
    for (int a = 0; a < dim_; ++a) v *= spacing(a);
    return v;
  }

  double node(int axis, std::size_t j) const {
    return -half_width_[axis] + static_cast<double>(j) * spacing(axis);
  }

  double wavenumber(int axis, std::size_t k) const {
    const auto n = static_cast<long long>(n_[axis]);
    long long kk = static_cast<long long>(k);
    if (kk >= n / 2) kk -= n;
    return std::numbers::pi / half_width_[axis] * static_cast<double>(kk);
  }

  /// Signed integer mode number of DFT index k on an axis.
  long long mode(int axis, std::size_t k) const {
    const auto n = static_cast<long long>(n_[axis]);
    const auto kk = static_cast<long long>(k);
    return kk >= n / 2 ? kk - n : kk;
  }

  std::array<std::size_t, 3> unflatten(std::size_t flat) const {
    std::array<std::size_t, 3> idx{0, 0, 0};
    for (int a = 2; a >= 0; --a) {
      idx[a] = flat % n_[a];
      flat /= n_[a];
    }
    return idx;
  }

  Point coordinates(std::size_t flat) const {
    const auto idx = unflatten(flat);
    Point x{0.0, 0.0, 0.0};
    for (int a = 0; a < dim_; ++a) x[a] = node(a, idx[a]);
    return x;
  }

  Point frequencies(std::size_t flat) const {
    const auto idx = unflatten(flat);
    Point xi{0.0, 0.0, 0.0};
    for (int a = 0; a < dim_; ++a) xi[a] = wavenumber(a, idx[a]);
    return xi;
  }

  std::vector<double> axis_nodes(int axis) const {
    std::vector<double> x(n_[axis]);
    for (std::size_t j = 0; j < n_[axis]; ++j) x[j] = node(axis, j);
    return x;
  }

  std::vector<double> axis_wavenumbers(int axis) const {
    std::vector<double> xi(n_[axis]);
    for (std::size_t k = 0; k < n_[axis]; ++k) xi[k] = wavenumber(axis, k);
    return xi;
  }

  const detail::FftPlan& fft() const { return *plan_; }

  friend bool operator==(const SpatialGrid& a, const SpatialGrid& b) {
    return a.dim_ == b.dim_ && a.n_ == b.n_ && a.half_width_ == b.half_width_;
  }

 private:
  int dim_;
  std::array<std::size_t, 3> n_{1, 1, 1};
  Point half_width_{0.0, 0.0, 0.0};
  std::size_t size_ = 1;
  std::shared_ptr<const detail::FftPlan> plan_;
};

/// Calls fn(flat_index, x) for every grid node in row-major order.
template <class Fn>
void for_each_node(const SpatialGrid& grid, Fn&& fn) {
  const int d = grid.dim();
  std::array<std::vector<double>, 3> axes;
  for (int a = 0; a < d; ++a) axes[a] = grid.axis_nodes(a);
  const std::size_t n0 = grid.points(0), n1 = grid.points(1), n2 = grid.points(2);
  std::size_t flat = 0;
  Point x{0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < n0; ++i) {
    x[0] = axes[0][i];
    for (std::size_t j = 0; j < n1; ++j) {
      if (d > 1) x[1] = axes[1][j];
      for (std::size_t k = 0; k < n2; ++k, ++flat) {
        if (d > 2) x[2] = axes[2][k];
        fn(flat, static_cast<const Point&>(x));
      }
    }
  }
}

/// Same traversal over wavenumbers, in DFT order.
template <class Fn>
void for_each_mode(const SpatialGrid& grid, Fn&& fn) {
  const int d = grid.dim();
  std::array<std::vector<double>, 3> axes;
  for (int a = 0; a < d; ++a) axes[a] = grid.axis_wavenumbers(a);
  const std::size_t n0 = grid.points(0), n1 = grid.points(1), n2 = grid.points(2);
  std::size_t flat = 0;
  Point xi{0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < n0; ++i) {
    xi[0] = axes[0][i];
    for (std::size_t j = 0; j < n1; ++j) {
      if (d > 1) xi[1] = axes[1][j];
      for (std::size_t k = 0; k < n2; ++k, ++flat) {
        if (d > 2) xi[2] = axes[2][k];
        fn(flat, static_cast<const Point&>(xi));
      }
    }
  }
}

/// Discretized complex wavefunction over a SpatialGrid, row-major.
class ComplexField {
 public:
  explicit ComplexField(SpatialGrid grid) : grid_(std::move(grid)), values_(grid_.size()) {}

  ComplexField(SpatialGrid grid, std::vector<Complex> values)
      : grid_(std::move(grid)), values_(std::move(values)) {
    if (values_.size() != grid_.size())
      throw ValidationError("field: value count does not match the grid point count");
  }

  const SpatialGrid& grid() const { return grid_; }
  std::size_t size() const { return values_.size(); }
  std::span<Complex> values() { return values_; }
  std::span<const Complex> values() const { return values_; }
  std::vector<Complex>& data() { return values_; }
  const std::vector<Complex>& data() const { return values_; }
  Complex& operator[](std::size_t i) { return values_[i]; }
  const Complex& operator[](std::size_t i) const { return values_[i]; }

  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](const Complex& z) {
      return std::isfinite(z.real()) && std::isfinite(z.imag());
    });
  }

 private:
  SpatialGrid grid_;
  std::vector<Complex> values_;
};

inline void require_same_grid(const ComplexField& a, const ComplexField& b) {
  if (!(a.grid() == b.grid())) throw ValidationError("fields live on different grids");
}

/// Unitary forward DFT (1/sqrt(N) scaling). The result is indexed in DFT order.
inline ComplexField forward_transform(const ComplexField& f) {
  ComplexField out = f;
  f.grid().fft().forward(out.data().data());
  const double s = 1.0 / std::sqrt(static_cast<double>(f.size()));
  for (auto& z : out.data()) z *= s;
  return out;
}

/// Unitary inverse DFT, exact inverse of forward_transform.
inline ComplexField inverse_transform(const ComplexField& coeffs) {
  ComplexField out = coeffs;
  coeffs.grid().fft().backward(out.data().data());
  const double s = 1.0 / std::sqrt(static_cast<double>(coeffs.size()));
  for (auto& z : out.data()) z *= s;
  return out;
}

/// Fourier multiplier with a precomputed symbol, one entry per mode in DFT order.
inline ComplexField apply_multiplier(const ComplexField& f, std::span<const Complex> symbol) {
  if (symbol.size() != f.size()) throw ValidationError("multiplier: symbol size mismatch");
  ComplexField out = f;
  auto& v = out.data();
  f.grid().fft().forward(v.data());
  const double s = 1.0 / static_cast<double>(f.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] *= symbol[i] * s;
  f.grid().fft().backward(v.data());
  return out;
}

/// Tabulates m(xi) over the grid's wavenumbers.
inline std::vector<Complex> tabulate_symbol(const SpatialGrid& grid,
                                            const std::function<Complex(const Point&)>& m) {
  std::vector<Complex> symbol(grid.size());
  for_each_mode(grid, [&](std::size_t i, const Point& xi) { symbol[i] = m(xi); });
  return symbol;
}

inline ComplexField apply_multiplier(const ComplexField& f, const std::function<Complex(const Point&)>& m) {
  const auto symbol = tabulate_symbol(f.grid(), m);
  return apply_multiplier(f, std::span<const Complex>(symbol));
}

inline void check_multi_index(const SpatialGrid& grid, const MultiIndex& m, int max_order, const char* what) {
  for (int a = 0; a < 3; ++a) {
    if (m[a] < 0) throw ValidationError(std::string(what) + ": negative multi-index entry");
    if (a >= grid.dim() && m[a] != 0)
      throw ValidationError(std::string(what) + ": multi-index exceeds grid dimension");
  }
  if (order(m) > max_order)
    throw ValidationError(std::string(what) + ": order " + std::to_string(order(m)) + " exceeds limit " +
                          std::to_string(max_order));
}

/// All multi-indices of total order m in dimension dim, lexicographic.
inline std::vector<MultiIndex> multi_indices_of_order(int dim, int m) {
  std::vector<MultiIndex> out;
  for (int a = m; a >= 0; --a)
    for (int b = m - a; b >= 0; --b) {
      const int c = m - a - b;
      if ((dim < 2 && b != 0) || (dim < 3 && c != 0)) continue;
      out.push_back({a, b, c});
    }
  return out;
}

/// Symbol (i xi)^beta of the derivative d^beta.
inline std::vector<Complex> derivative_symbol(const SpatialGrid& grid, const MultiIndex& beta) {
  return tabulate_symbol(grid, [&](const Point& xi) {
    Complex s{1.0, 0.0};
    for (int a = 0; a < grid.dim(); ++a)
      for (int p = 0; p < beta[a]; ++p) s *= Complex(0.0, xi[a]);
    return s;
  });
}

/// Spectral derivative d^beta f. Exact on every grid mode.
inline ComplexField derivative(const ComplexField& f, const MultiIndex& beta,
                               int max_order = kMaxDerivativeOrder) {
  check_multi_index(f.grid(), beta, max_order, "derivative");
  if (order(beta) == 0) return f;
  const auto symbol = derivative_symbol(f.grid(), beta);
  return apply_multiplier(f, std::span<const Complex>(symbol));
}

/// Real weight x^alpha sampled at the nodes.
inline RealField moment_weight(const SpatialGrid& grid, const MultiIndex& alpha,
                               int max_order = kMaxDerivativeOrder) {
  check_multi_index(grid, alpha, max_order, "moment_weight");
  RealField w(grid.size());
  for_each_node(grid, [&](std::size_t i, const Point& x) {
    double v = 1.0;
    for (int a = 0; a < grid.dim(); ++a)
      for (int p = 0; p < alpha[a]; ++p) v *= x[a];
    w[i] = v;
  });
  return w;
}

inline ComplexField multiply(const ComplexField& f, std::span<const double> weight) {
  if (weight.size() != f.size()) throw ValidationError("multiply: weight size mismatch");
  ComplexField out = f;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= weight[i];
  return out;
}

/// out(x) = fn(f(x), x) at every node.
template <class Fn>
ComplexField pointwise_map(const ComplexField& f, Fn&& fn) {
  ComplexField out(f.grid());
  for_each_node(f.grid(), [&](std::size_t i, const Point& x) { out[i] = fn(f[i], x); });
  return out;
}

/// Returns y + a x.
inline ComplexField axpy(Complex a, const ComplexField& x, const ComplexField& y) {
  require_same_grid(x, y);
  ComplexField out = y;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += a * x[i];
  return out;
}

/// Rectangle-rule L^r norm; r = infinity returns the max modulus.
inline double lp_norm(const ComplexField& f, double r) {
  if (std::isinf(r) && r > 0) {
    double m = 0.0;
    for (const auto& z : f.values()) m = std::max(m, std::abs(z));
    return m;
  }
  if (!(r >= 2.0)) throw ValidationError("lp_norm: exponent must be >= 2 or infinity");
  double s = 0.0;
  if (r == 2.0) {
    for (const auto& z : f.values()) s += std::norm(z);
    return std::sqrt(s * f.grid().cell_volume());
  }
  for (const auto& z : f.values()) s += std::pow(std::abs(z), r);
  return std::pow(s * f.grid().cell_volume(), 1.0 / r);
}

inline double l2_norm(const ComplexField& f) { return lp_norm(f, 2.0); }

/// Discrete mass sum |f|^2 dx^d.
inline double mass(const ComplexField& f) {
  double s = 0.0;
  for (const auto& z : f.values()) s += std::norm(z);
  return s * f.grid().cell_volume();
}

/// <f, g> = sum conj(f) g dx^d.
inline Complex l2_inner(const ComplexField& f, const ComplexField& g) {
  require_same_grid(f, g);
  Complex s{0.0, 0.0};
  for (std::size_t i = 0; i < f.size(); ++i) s += std::conj(f[i]) * g[i];
  return s * f.grid().cell_volume();
}

/// Euclidean norm of the coefficient vector; equals l2_norm/sqrt(dx^d) for
/// physical fields and is the natural norm for spectral coefficients.
inline double coefficient_norm(const ComplexField& f) {
  double s = 0.0;
  for (const auto& z : f.values()) s += std::norm(z);
  return std::sqrt(s);
}

/// Largest modulus within the outer `fraction` of the box on any axis, relative to the global max.
inline double boundary_amplitude_ratio(const ComplexField& f, double fraction = 0.05) {
  const auto& g = f.grid();
  double global = 0.0, edge = 0.0;
  for_each_node(g, [&](std::size_t i, const Point& x) {
    const double m = std::abs(f[i]);
    global = std::max(global, m);
    for (int a = 0; a < g.dim(); ++a) {
      if (std::abs(x[a]) >= (1.0 - fraction) * g.half_width(a)) {
        edge = std::max(edge, m);
        break;
      }
    }
  });
  return global > 0.0 ? edge / global : 0.0;
}

}  // namespace tdnls
