#pragma once

#include <stdexcept>
#include <string>

namespace tdnls {

/// Input or configuration violates a documented constraint. Maps to CLI exit code 2.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical guard tripped during a computation (non-finite state, mass drift,
/// gradient blow-up, vanishing Hill solution). Maps to CLI exit code 3.
class NumericalGuardError : public std::runtime_error {
 public:
  NumericalGuardError(const std::string& what, double time)
      : std::runtime_error(what), time_(time) {}

  /// Time at which the guard fired.
  double time() const noexcept { return time_; }

 private:
  double time_;
};

}  // namespace tdnls
