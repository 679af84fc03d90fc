#pragma once

// Off-grid evaluation: trigonometric interpolation of a field and the
// continuous Fourier transform at arbitrary frequencies, both on
// tensor-product target sets so the cost stays O(N * M) per axis.

#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "tdnls/grid.hpp"

namespace tdnls {

using AxisTargets = std::array<std::vector<double>, 3>;

namespace detail {

// Applies out[m] = kernel(line, m) along each axis in turn, replacing the
// axis length by the number of targets on that axis.
template <class Kernel>
std::vector<Complex> transform_lines(std::vector<Complex> data, std::array<std::size_t, 3> shape, int dim,
                                     const AxisTargets& targets, Kernel&& kernel) {
  for (int axis = 0; axis < dim; ++axis) {
    const std::size_t n = shape[axis];
    const std::size_t m_count = targets[axis].size();
    std::array<std::size_t, 3> out_shape = shape;
    out_shape[axis] = m_count;
    std::size_t outer = 1, inner = 1;
    for (int a = 0; a < axis; ++a) outer *= shape[a];
    for (int a = axis + 1; a < 3; ++a) inner *= shape[a];
    std::vector<Complex> out(outer * m_count * inner);
    std::vector<Complex> line(n);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < inner; ++i) {
        for (std::size_t k = 0; k < n; ++k) line[k] = data[(o * n + k) * inner + i];
        for (std::size_t m = 0; m < m_count; ++m)
          out[(o * m_count + m) * inner + i] = kernel(axis, line, targets[axis][m]);
      }
    }
    data = std::move(out);
    shape = out_shape;
  }
  return data;
}

}  // namespace detail

/// Evaluates the band-limited (trigonometric) interpolant of f on the tensor
/// product of per-axis target coordinates. Targets outside the box see the
/// periodic extension. The Nyquist mode is split symmetrically so real data
/// interpolates to real values.
inline std::vector<Complex> interpolate_at(const ComplexField& f, const AxisTargets& targets) {
  const SpatialGrid& g = f.grid();
  std::vector<Complex> coeffs = f.data();
  g.fft().forward(coeffs.data());
  const double scale = 1.0 / static_cast<double>(g.size());
  for (auto& c : coeffs) c *= scale;

  auto kernel = [&](int axis, const std::vector<Complex>& c, double y) {
    const std::size_t n = c.size();
    const double theta = std::numbers::pi / g.half_width(axis) * (y + g.half_width(axis));
    const Complex z = std::polar(1.0, theta);
    const Complex zc = std::conj(z);
    Complex sum = c[0];
    Complex p = 1.0, q = 1.0;
    for (std::size_t k = 1; k < n / 2; ++k) {
      p *= z;
      q *= zc;
      sum += c[k] * p + c[n - k] * q;
    }
    sum += c[n / 2] * std::cos(static_cast<double>(n / 2) * theta);
    return sum;
  };
  std::array<std::size_t, 3> shape{g.points(0), g.points(1), g.points(2)};
  return detail::transform_lines(std::move(coeffs), shape, g.dim(), targets, kernel);
}

/// Continuous Fourier transform with normalization
///   F(f)(xi) = (2 i pi)^{-d/2} \int e^{-i x.xi} f(x) dx,
/// evaluated by the rectangle rule on the tensor product of per-axis frequencies.
inline std::vector<Complex> fourier_transform_at(const ComplexField& f, const AxisTargets& frequencies) {
  const SpatialGrid& g = f.grid();
  auto kernel = [&](int axis, const std::vector<Complex>& line, double xi) {
    const double dx = g.spacing(axis);
    const double x0 = -g.half_width(axis);
    const Complex step = std::polar(1.0, -xi * dx);
    Complex w = std::polar(1.0, -xi * x0);
    Complex sum = 0.0;
    for (const auto& v : line) {
      sum += v * w;
      w *= step;
    }
    // (2 i pi)^{-1/2} per axis
    return sum * dx * std::polar(1.0 / std::sqrt(2.0 * std::numbers::pi), -std::numbers::pi / 4.0);
  };
  std::array<std::size_t, 3> shape{g.points(0), g.points(1), g.points(2)};
  return detail::transform_lines(f.data(), shape, g.dim(), frequencies, kernel);
}

/// Per-axis node coordinates of a grid mapped through fn, as targets for the functions above.
template <class Fn>
AxisTargets mapped_axis_nodes(const SpatialGrid& grid, Fn&& fn) {
  AxisTargets t;
  for (int a = 0; a < grid.dim(); ++a) {
    t[a] = grid.axis_nodes(a);
    for (auto& x : t[a]) x = fn(x);
  }
  return t;
}

}  // namespace tdnls
