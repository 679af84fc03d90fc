#pragma once

// The equation  i u_t + (1/2) Lap u = V(t, x) u + c(t) |u|^{2 sigma} u.

#include <cmath>
#include <string>

#include "tdnls/errors.hpp"
#include "tdnls/potentials.hpp"
#include "tdnls/time_function.hpp"

namespace tdnls {

/// Coefficient c(t) of the defocusing term: 1, a time function H(t), or 0 (linear run).
class Nonlinearity {
 public:
  enum class Kind { unit, time_function, zero };

  static Nonlinearity unit() { return Nonlinearity(Kind::unit, {}); }
  static Nonlinearity zero() { return Nonlinearity(Kind::zero, {}); }
  static Nonlinearity of(TimeFunction h) { return Nonlinearity(Kind::time_function, std::move(h)); }

  Kind kind() const { return kind_; }
  const TimeFunction& function() const { return h_; }
  bool is_linear() const { return kind_ == Kind::zero; }

  double operator()(double t) const {
    switch (kind_) {
      case Kind::unit:
        return 1.0;
      case Kind::zero:
        return 0.0;
      case Kind::time_function:
        return h_(t);
    }
    return 0.0;
  }

  double derivative(double t) const { return kind_ == Kind::time_function ? h_.derivative(t) : 0.0; }

 private:
  Nonlinearity(Kind k, TimeFunction h) : kind_(k), h_(std::move(h)) {}
  Kind kind_;
  TimeFunction h_;
};

struct Model {
  PotentialSpec potential = ZeroPotential{};
  double sigma = 1.0;
  Nonlinearity nonlinearity = Nonlinearity::unit();
};

/// Checks sigma > 0 and energy-subcriticality (sigma < 2/(d-2) for d = 3).
inline void validate_model(const Model& m, int dim) {
  if (!(m.sigma > 0.0) || !std::isfinite(m.sigma)) throw ValidationError("sigma must be positive");
  if (dim == 3 && !(m.sigma < 2.0))
    throw ValidationError("sigma must satisfy sigma < 2/(d-2) = 2 in dimension 3 (energy-subcritical)");
  if (m.nonlinearity.kind() == Nonlinearity::Kind::time_function) {
    if (m.sigma != std::floor(m.sigma))
      throw ValidationError("non-autonomous nonlinearity H(t) requires an integer sigma");
    if (m.sigma * dim < 2.0) throw ValidationError("non-autonomous nonlinearity H(t) requires sigma >= 2/d");
  }
}

}  // namespace tdnls
