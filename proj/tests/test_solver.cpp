#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "tdnls/solver.hpp"
#include "test_support.hpp"

using namespace tdnls;
using tdnls::testing::Gen;
using tdnls::testing::relative_l2;

namespace {

constexpr double kPi = std::numbers::pi;

Model linear(PotentialSpec v) { return Model{std::move(v), 1.0, Nonlinearity::zero()}; }

ComplexField evolve_to(const ComplexField& u0, const Model& m, double t_end, double dt) {
  SolverConfig c;
  c.dt = dt;
  c.t_end = t_end;
  c.diagnostics_stride = 1 << 30;
  c.diagnostics.max_k = 1;
  return evolve(u0, m, c).final_state;
}

}  // namespace

TEST(Step, LinearPlaneWaveIsExact) {
  SpatialGrid g(1, 64, kPi);
  const double kappa = 3.0;
  const auto u = plane_wave(g, 1.0, {kappa, 0, 0});
  const double dt = 0.37;
  const auto out = step_strang(u, 0.0, dt, linear(ZeroPotential{}));
  const auto expect = plane_wave(g, std::polar(1.0, -kappa * kappa * dt / 2.0), {kappa, 0, 0});
  EXPECT_LT(relative_l2(out, expect), 1e-13);
}

TEST(Step, NonlinearPlaneWaveMatchesExactSolution) {
  SpatialGrid g(1, 64, kPi);
  const double kappa = 2.0, A = 0.8, dt = 1e-2;
  const auto u = plane_wave(g, A, {kappa, 0, 0});
  const auto out = step_strang(u, 0.0, dt, Model{ZeroPotential{}, 1.0, Nonlinearity::unit()});
  const auto expect = plane_wave(g, A * std::polar(1.0, -(kappa * kappa / 2.0 + A * A) * dt), {kappa, 0, 0});
  EXPECT_LT(relative_l2(out, expect), 1e-12);
}

TEST(Step, NonFiniteInputIsGuarded) {
  SpatialGrid g(1, 16, 1.0);
  ComplexField u(g);
  u[3] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(step_strang(u, 0.0, 0.1, Model{}), NumericalGuardError);
}

TEST(Evolve, HarmonicGroundStateAfterFullPeriod) {
  SpatialGrid g(1, 512, 12.0);
  const auto u0 = tdnls::testing::hermite_ground_state(g);
  const auto u = evolve_to(u0, linear(IsotropicHarmonic{TimeFunction::constant(1.0)}), 2.0 * kPi, 1e-3);
  // e^{-i t/2} u0 at t = 2 pi is -u0
  const auto minus = pointwise_map(u0, [](Complex z, const Point&) { return -z; });
  EXPECT_LT(relative_l2(u, minus), 1e-6);
}

TEST(Evolve, FreeGaussianVariance) {
  SpatialGrid g(1, 1024, 40.0);
  const auto u0 = tdnls::testing::hermite_ground_state(g);
  SolverConfig c;
  c.dt = 1e-3;
  c.t_end = 2.0;
  c.diagnostics_stride = 100;
  const auto tr = evolve(u0, linear(ZeroPotential{}), c);
  ASSERT_EQ(tr.records.size(), 21u);
  for (const auto& r : tr.records) {
    const double x2 = r.momenta[1] * r.momenta[1];
    EXPECT_NEAR(x2, (1.0 + r.t * r.t) / 2.0, 1e-6) << r.t;
  }
  EXPECT_NEAR(tr.records.front().momenta[1] * tr.records.front().momenta[1], 0.5, 1e-10);
}

TEST(Evolve, ZeroDurationHasOnlyInitialRecord) {
  SpatialGrid g(1, 64, 10.0);
  SolverConfig c;
  c.t_end = 0.0;
  const auto u0 = gaussian(g);
  const auto tr = evolve(u0, Model{}, c);
  EXPECT_EQ(tr.records.size(), 1u);
  EXPECT_EQ(tr.steps, 0u);
  EXPECT_EQ(tr.final_state.data(), u0.data());
}

TEST(Evolve, RecordsEveryStrideAndAtEnd) {
  SpatialGrid g(1, 64, 10.0);
  SolverConfig c;
  c.dt = 0.01;
  c.t_end = 0.255;
  c.diagnostics_stride = 10;
  c.snapshot_times = {0.0, 0.1, 0.2};
  const auto tr = evolve(gaussian(g), Model{}, c);
  for (std::size_t i = 1; i < tr.times.size(); ++i) EXPECT_GT(tr.times[i], tr.times[i - 1]);
  EXPECT_DOUBLE_EQ(tr.times.back(), 0.255);
  ASSERT_EQ(tr.snapshots.size(), 3u);
  EXPECT_DOUBLE_EQ(tr.snapshots[1].first, 0.1);
}

TEST(Evolve, ConfiningSigmaNormStaysBounded) {
  SpatialGrid g(1, 512, 16.0);
  GaussianData gd;
  gd.center = {2.0, 0, 0};
  SolverConfig c;
  c.dt = 5e-3;
  c.t_end = 50.0;
  c.diagnostics_stride = 20;
  c.diagnostics.max_k = 1;
  const auto tr = evolve(gaussian(g, gd), Model{IsotropicHarmonic{TimeFunction::constant(1.0)}, 1.0}, c);
  double first_period = 0.0, overall = 0.0;
  for (const auto& r : tr.records) {
    overall = std::max(overall, r.sigma_norms[1]);
    if (r.t <= 2.0 * kPi) first_period = std::max(first_period, r.sigma_norms[1]);
  }
  EXPECT_TRUE(std::isfinite(overall));
  EXPECT_LE(overall, 1.05 * first_period);
}

TEST(Evolve, MassConservedOnNonlinearRuns) {
  Gen gen(42);
  for (int rep = 0; rep < 4; ++rep) {
    SpatialGrid g(1, 256, 12.0);
    const auto u0 = gen.smooth_field(g);
    const double sigma = gen.coin() ? 1.0 : 2.0;
    SolverConfig c;
    c.dt = 1e-3;
    c.t_end = 1.0;
    c.mass_drift_limit = 1e-10;
    c.diagnostics_stride = 100;
    const auto tr = evolve(u0, Model{IsotropicHarmonic{TimeFunction::oscillatory()}, sigma}, c);
    EXPECT_LE(tr.max_mass_drift, 1e-10);
  }
}

TEST(Evolve, SecondOrderConvergence) {
  SpatialGrid g(1, 512, 20.0);
  const auto u0 = tdnls::testing::hermite_ground_state(g);
  const Model m{IsotropicHarmonic{TimeFunction::affine(0.5, 0.5)}, 1.0, Nonlinearity::unit()};
  const double dt = 4e-3;
  const auto ref = evolve_to(u0, m, 1.0, dt / 32.0);
  std::vector<double> err;
  for (double h : {dt, dt / 2.0, dt / 4.0}) err.push_back(relative_l2(evolve_to(u0, m, 1.0, h), ref));
  for (std::size_t i = 0; i + 1 < err.size(); ++i) {
    EXPECT_NEAR(err[i] / err[i + 1], 4.0, 0.6) << err[i] << " " << err[i + 1];
  }
}

TEST(Evolve, TimeReversalOnLinearRun) {
  SpatialGrid g(1, 256, 12.0);
  Gen gen(7);
  const auto u0 = gen.smooth_field(g);
  StrangStepper stepper(g, linear(IsotropicHarmonic{TimeFunction::affine(1.0, 0.3)}), false);
  auto u = u0;
  const double h = 1e-3;
  const int n = 1000;
  for (int j = 0; j < n; ++j) stepper.step(u, j * h, h);
  for (int j = n; j > 0; --j) stepper.step(u, j * h, -h);
  EXPECT_LT(relative_l2(u, u0), 1e-9);
}

TEST(Evolve, GaugeCovariance) {
  SpatialGrid g(1, 256, 12.0);
  Gen gen(77);
  const Model m{IsotropicHarmonic{TimeFunction::constant(0.5)}, 1.0};
  for (int rep = 0; rep < 3; ++rep) {
    const auto u0 = gen.smooth_field(g);
    const Complex phase = std::polar(1.0, gen.uniform(0, 2 * kPi));
    const auto rotated = pointwise_map(u0, [&](Complex z, const Point&) { return phase * z; });
    const auto a = evolve_to(u0, m, 0.5, 1e-3);
    const auto b = evolve_to(rotated, m, 0.5, 1e-3);
    const auto expect = pointwise_map(a, [&](Complex z, const Point&) { return phase * z; });
    EXPECT_LT(relative_l2(b, expect), 1e-12);
  }
}

TEST(Evolve, GuardsFire) {
  SpatialGrid g(1, 128, 10.0);
  const auto u0 = gaussian(g);
  SolverConfig c;
  c.t_end = 0.1;
  c.diagnostics_stride = 1;

  SolverConfig tight = c;
  tight.mass_drift_limit = -1.0;
  EXPECT_THROW(evolve(u0, Model{}, tight), NumericalGuardError);

  SolverConfig blow = c;
  blow.blowup_factor = 1e-3;
  try {
    evolve(u0, Model{}, blow);
    FAIL() << "expected a guard";
  } catch (const NumericalGuardError& e) {
    EXPECT_GT(e.time(), 0.0);
  }

  ComplexField bad = u0;
  bad[5] = Complex(std::numeric_limits<double>::infinity(), 0.0);
  EXPECT_THROW(evolve(bad, Model{}, c), NumericalGuardError);
}

TEST(Evolve, ValidatesConfiguration) {
  SpatialGrid g1(1, 64, 10.0), g3(3, 8, 4.0);
  SolverConfig c;
  c.t_end = 0.01;
  EXPECT_THROW(evolve(gaussian(g3), Model{ZeroPotential{}, 2.0}, c), ValidationError);
  EXPECT_THROW(evolve(gaussian(g1), Model{ZeroPotential{}, -1.0}, c), ValidationError);
  EXPECT_THROW(evolve(gaussian(g1), Model{ZeroPotential{}, 1.0, Nonlinearity::of(TimeFunction::constant(1.0))}, c),
               ValidationError);
  EXPECT_THROW(evolve(gaussian(g1), Model{ZeroPotential{}, 1.5, Nonlinearity::of(TimeFunction::constant(1.0))}, c),
               ValidationError);
  SolverConfig bad = c;
  bad.dt = 0.0;
  EXPECT_THROW(evolve(gaussian(g1), Model{}, bad), ValidationError);
  bad = c;
  bad.snapshot_times = {1.0};
  EXPECT_THROW(evolve(gaussian(g1), Model{}, bad), ValidationError);
}

TEST(InitialCondition, GaussianAndPlaneWave) {
  SpatialGrid g(2, 64, 10.0);
  GaussianData gd;
  gd.center = {1.5, -0.5, 0};
  gd.width = 0.8;
  const auto u = gaussian(g, gd);
  EXPECT_NEAR(mass(u), 1.0, 1e-14);
  // first moment oracle: <x_a> = center_a
  for (int a = 0; a < 2; ++a) {
    MultiIndex alpha{0, 0, 0};
    alpha[a] = 1;
    const auto w = moment_weight(g, alpha);
    EXPECT_NEAR(l2_inner(u, multiply(u, w)).real(), gd.center[a], 1e-10);
  }
  const auto pw = plane_wave(g, 0.3, {kPi / 10.0, 0, 0});
  EXPECT_NEAR(lp_norm(pw, std::numeric_limits<double>::infinity()), 0.3, 1e-15);
  EXPECT_THROW(gaussian(g, {{0, 0, 0}, 0.0, {0, 0, 0}}), ValidationError);
}

TEST(Evolve, ChainedPhasesMatchPlainSteps) {
  SpatialGrid g(1, 256, 12.0);
  Gen gen(5);
  const auto u0 = gen.smooth_field(g);
  const Model m{IsotropicHarmonic{TimeFunction::oscillatory()}, 2.0, Nonlinearity::unit()};
  SolverConfig c;
  c.dt = 1e-3;
  c.t_end = 0.5;
  c.diagnostics_stride = 37;
  c.snapshot_times = {0.1234};
  const auto tr = evolve(u0, m, c);
  StrangStepper stepper(g, m, dealias_enabled(c, m));
  auto u = u0;
  double t = 0.0;
  for (double target : {0.1234, 0.5}) {
    const auto n = static_cast<std::size_t>(std::ceil((target - t) / c.dt - 1e-9));
    const double h = (target - t) / static_cast<double>(n), t0 = t;
    for (std::size_t j = 1; j <= n; ++j) {
      stepper.step(u, t, h);
      t = j == n ? target : t0 + static_cast<double>(j) * h;
    }
    if (target == 0.1234) {
      EXPECT_LT(relative_l2(tr.snapshots[0].second, u), 1e-12);
    }
  }
  EXPECT_LT(relative_l2(tr.final_state, u), 1e-12);
}
