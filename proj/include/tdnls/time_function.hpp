#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tdnls/errors.hpp"

namespace tdnls {

/// Japanese bracket <t> = sqrt(1 + t^2).
inline double bracket(double t) { return std::sqrt(1.0 + t * t); }

/// Upper bound |f(t)| <= amplitude * <t>^{-gamma}.
struct DecayBound {
  double amplitude = 0.0;
  double gamma = 0.0;
};

/// Scalar function of time: the frequency Omega(t) of harmonic potentials and
/// time-dependent nonlinearity coefficients.
class TimeFunction {
 public:
  enum class Kind { constant, power_decay, oscillatory, affine, tabulated, custom };

  TimeFunction() = default;

  static TimeFunction constant(double c) {
    TimeFunction f;
    f.kind_ = Kind::constant;
    f.c_ = c;
    return f;
  }

  /// c / <t>^gamma
  static TimeFunction power_decay(double c, double gamma) {
    TimeFunction f;
    f.kind_ = Kind::power_decay;
    f.c_ = c;
    f.gamma_ = gamma;
    return f;
  }

  /// c cos(e^t) / <t>^3
  static TimeFunction oscillatory(double c = 1.0) {
    TimeFunction f;
    f.kind_ = Kind::oscillatory;
    f.c_ = c;
    return f;
  }

  /// c + slope * t
  static TimeFunction affine(double c, double slope) {
    TimeFunction f;
    f.kind_ = Kind::affine;
    f.c_ = c;
    f.slope_ = slope;
    return f;
  }

  /// Piecewise-linear through (times, values); evaluating outside [times.front(), times.back()] throws.
  static TimeFunction tabulated(std::vector<double> times, std::vector<double> values) {
    if (times.size() < 2 || times.size() != values.size())
      throw ValidationError("tabulated time function needs >= 2 matching samples");
    if (!std::is_sorted(times.begin(), times.end()) ||
        std::adjacent_find(times.begin(), times.end()) != times.end())
      throw ValidationError("tabulated time function: sample times must be strictly increasing");
    TimeFunction f;
    f.kind_ = Kind::tabulated;
    f.times_ = std::move(times);
    f.values_ = std::move(values);
    return f;
  }

  /// Arbitrary callable; derivative falls back to central differences when omitted.
  static TimeFunction custom(std::function<double(double)> fn, std::function<double(double)> dfn = {},
                             std::optional<DecayBound> decay = std::nullopt) {
    TimeFunction f;
    f.kind_ = Kind::custom;
    f.fn_ = std::move(fn);
    f.dfn_ = std::move(dfn);
    f.custom_decay_ = decay;
    return f;
  }

  Kind kind() const { return kind_; }
  double coefficient() const { return c_; }
  double gamma() const { return gamma_; }
  double slope() const { return slope_; }
  const std::vector<double>& sample_times() const { return times_; }
  const std::vector<double>& sample_values() const { return values_; }
  bool evaluable() const { return kind_ != Kind::custom || static_cast<bool>(fn_); }

  double operator()(double t) const {
    switch (kind_) {
      case Kind::constant:
        return c_;
      case Kind::power_decay:
        return c_ * std::pow(bracket(t), -gamma_);
      case Kind::oscillatory:
        return c_ * std::cos(std::exp(t)) / std::pow(bracket(t), 3);
      case Kind::affine:
        return c_ + slope_ * t;
      case Kind::tabulated:
        return interpolate(t);
      case Kind::custom:
        if (!fn_) throw ValidationError("custom time function has no callable");
        return fn_(t);
    }
    return 0.0;
  }

  double derivative(double t) const {
    switch (kind_) {
      case Kind::constant:
        return 0.0;
      case Kind::power_decay:
        return -c_ * gamma_ * t * std::pow(bracket(t), -gamma_ - 2.0);
      case Kind::oscillatory: {
        const double b = bracket(t);
        const double e = std::exp(t);
        return -c_ * std::sin(e) * e / std::pow(b, 3) - 3.0 * c_ * std::cos(e) * t / std::pow(b, 5);
      }
      case Kind::affine:
        return slope_;
      case Kind::tabulated: {
        check_range(t);
        auto it = std::upper_bound(times_.begin(), times_.end(), t);
        std::size_t i = static_cast<std::size_t>(it - times_.begin());
        if (i >= times_.size()) i = times_.size() - 1;
        if (i == 0) i = 1;
        return (values_[i] - values_[i - 1]) / (times_[i] - times_[i - 1]);
      }
      case Kind::custom: {
        if (dfn_) return dfn_(t);
        const double h = 1e-5 * std::max(1.0, std::abs(t));
        return ((*this)(t + h) - (*this)(t - h)) / (2.0 * h);
      }
    }
    return 0.0;
  }

  /// Known bound |f(t)| <= C <t>^{-gamma}, when the catalog entry has one.
  std::optional<DecayBound> decay() const {
    switch (kind_) {
      case Kind::power_decay:
        return DecayBound{std::abs(c_), gamma_};
      case Kind::oscillatory:
        return DecayBound{std::abs(c_), 3.0};
      case Kind::constant:
        if (c_ == 0.0) return DecayBound{0.0, 1e300};
        return std::nullopt;
      case Kind::custom:
        return custom_decay_;
      default:
        return std::nullopt;
    }
  }

  bool is_constant() const { return kind_ == Kind::constant; }

  std::string describe() const {
    switch (kind_) {
      case Kind::constant:
        return "constant(" + std::to_string(c_) + ")";
      case Kind::power_decay:
        return "power_decay(c=" + std::to_string(c_) + ", gamma=" + std::to_string(gamma_) + ")";
      case Kind::oscillatory:
        return "oscillatory(c=" + std::to_string(c_) + ")";
      case Kind::affine:
        return "affine(" + std::to_string(c_) + " + " + std::to_string(slope_) + " t)";
      case Kind::tabulated:
        return "tabulated(" + std::to_string(times_.size()) + " samples)";
      case Kind::custom:
        return "custom";
    }
    return "?";
  }

 private:
  void check_range(double t) const {
    if (t < times_.front() || t > times_.back())
      throw std::out_of_range("tabulated time function queried at t=" + std::to_string(t) + " outside [" +
                              std::to_string(times_.front()) + ", " + std::to_string(times_.back()) + "]");
  }

  double interpolate(double t) const {
    check_range(t);
    auto it = std::upper_bound(times_.begin(), times_.end(), t);
    std::size_t i = static_cast<std::size_t>(it - times_.begin());
    if (i >= times_.size()) return values_.back();
    const double w = (t - times_[i - 1]) / (times_[i] - times_[i - 1]);
    return (1.0 - w) * values_[i - 1] + w * values_[i];
  }

  Kind kind_ = Kind::constant;
  double c_ = 0.0;
  double gamma_ = 0.0;
  double slope_ = 0.0;
  std::vector<double> times_, values_;
  std::function<double(double)> fn_, dfn_;
  std::optional<DecayBound> custom_decay_;
};

}  // namespace tdnls
