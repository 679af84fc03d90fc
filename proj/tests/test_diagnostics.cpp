#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "tdnls/diagnostics.hpp"
#include "tdnls/solver.hpp"
#include "test_support.hpp"

using namespace tdnls;
using tdnls::testing::Gen;

namespace {

constexpr double kPi = std::numbers::pi;

// Composite Simpson on [-a, a]; used as an oracle independent of the grid code.
template <class F>
double simpson(F&& f, double a, int n = 20000) {
  const double h = 2.0 * a / n;
  double s = f(-a) + f(a);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(-a + i * h);
  return s * h / 3.0;
}

Trajectory run(const ComplexField& u0, const Model& m, double t_end, double dt, int stride, bool v_frame = false,
               double t_start = 0.0) {
  SolverConfig c;
  c.dt = dt;
  c.t_start = t_start;
  c.t_end = t_end;
  c.diagnostics_stride = stride;
  c.diagnostics.max_k = 1;
  c.diagnostics.v_frame = v_frame;
  c.diagnostics.lr_exponents = {2.0, std::numeric_limits<double>::infinity()};
  return evolve(u0, m, c);
}

}  // namespace

TEST(SigmaNorm, GaussianValues) {
  SpatialGrid g(1, 1024, 20.0);
  const auto u = tdnls::testing::hermite_ground_state(g);
  EXPECT_NEAR(sigma_norm(u, 0), 1.0, 1e-12);
  EXPECT_NEAR(sigma_norm(u, 1), 1.0 + std::sqrt(2.0), 1e-10);
  // k = 2 adds ||x^2 u|| = sqrt(3)/2, ||x u'|| = sqrt(3)/2 (u' = -x u), ||u''|| = sqrt(3)/2
  EXPECT_NEAR(sigma_norm(u, 2), 1.0 + std::sqrt(2.0) + 1.5 * std::sqrt(3.0), 1e-9);
}

TEST(SigmaNorm, Properties) {
  Gen gen(101);
  for (int rep = 0; rep < 30; ++rep) {
    SpatialGrid g(gen.integer(1, 2), 32, gen.uniform(4, 10));
    const auto f = gen.smooth_field(g), h = gen.smooth_field(g);
    const int k = gen.integer(0, 3);
    const double c = gen.uniform(-4, 4);
    const auto cf = pointwise_map(f, [&](Complex z, const Point&) { return c * z; });
    EXPECT_NEAR(sigma_norm(cf, k), std::abs(c) * sigma_norm(f, k), 1e-10 * sigma_norm(cf, k) + 1e-300);
    EXPECT_LE(sigma_norm(axpy(1.0, f, h), k), (sigma_norm(f, k) + sigma_norm(h, k)) * (1 + 1e-12));
    if (k > 0) {
      EXPECT_LE(sigma_norm(f, k - 1), sigma_norm(f, k));
    }
    const auto rec = compute_record(f, 0.0, Model{}, DiagnosticsConfig{3, {4.0}, false, 0.05});
    for (int j = 0; j <= 3; ++j) EXPECT_LE(rec.hk_norms[j], rec.sigma_norms[j] * (1 + 1e-12));
  }
}

TEST(Record, GaussianPseudoEnergyAgainstQuadrature) {
  SpatialGrid g(1, 1024, 20.0);
  const auto u = tdnls::testing::hermite_ground_state(g);
  const auto r = compute_record(u, 0.0, Model{ZeroPotential{}, 1.0});
  auto phi = [](double x) { return std::pow(kPi, -0.25) * std::exp(-0.5 * x * x); };
  const double kin = 0.5 * simpson([&](double x) { return x * x * phi(x) * phi(x); }, 20.0);
  const double nl = 0.5 * simpson([&](double x) { return std::pow(phi(x), 4); }, 20.0);
  const double x2 = 0.5 * simpson([&](double x) { return x * x * phi(x) * phi(x); }, 20.0);
  EXPECT_NEAR(r.kinetic, kin, 1e-10);
  EXPECT_NEAR(r.nonlinear_term, nl, 1e-10);
  EXPECT_NEAR(r.pseudoE, kin + nl + x2, 1e-10);
  EXPECT_NEAR(r.pseudoE, 0.5 + 0.5 / std::sqrt(2.0 * kPi), 1e-10);
  EXPECT_DOUBLE_EQ(r.E, r.kinetic + r.nonlinear_term + r.potential_term);
}

TEST(Record, RepulsivePotentialTerm) {
  SpatialGrid g(1, 1024, 20.0);
  const auto u = tdnls::testing::hermite_ground_state(g);
  const auto r = compute_record(u, 3.0, Model{RepulsivePotential{}, 1.0});
  EXPECT_NEAR(r.potential_term, -0.5, 1e-10);
  EXPECT_NEAR(r.E, r.kinetic + r.nonlinear_term - r.momenta[1] * r.momenta[1], 1e-12);
}

TEST(Record, ZeroFieldIsAllZero) {
  SpatialGrid g(2, 16, 3.0);
  const auto r = compute_record(ComplexField(g), 1.0, Model{IsotropicHarmonic{TimeFunction::constant(1.0)}, 1.0});
  EXPECT_EQ(r.mass, 0.0);
  EXPECT_EQ(r.E, 0.0);
  EXPECT_EQ(r.pseudoE, 0.0);
  for (double s : r.sigma_norms) EXPECT_EQ(s, 0.0);
  EXPECT_EQ(r.J_norm, 0.0);
  EXPECT_EQ(r.boundary_amplitude, 0.0);
}

TEST(Record, ValidatesOrderAndExponents) {
  SpatialGrid g(1, 16, 3.0);
  DiagnosticsConfig c;
  c.max_k = 0;
  EXPECT_THROW(compute_record(gaussian(g), 0.0, Model{}, c), ValidationError);
  const auto r = compute_record(gaussian(g), 0.0, Model{});
  EXPECT_THROW(r.lr_norm(6.0), ValidationError);
}

TEST(Csv, ColumnsMatchValues) {
  SpatialGrid g(1, 64, 8.0);
  DiagnosticsConfig c{2, {4.0, std::numeric_limits<double>::infinity()}, false, 0.05};
  const auto cols = csv_columns(c);
  const auto vals = csv_values(compute_record(gaussian(g), 0.0, Model{}, c));
  EXPECT_EQ(cols.size(), vals.size());
  EXPECT_EQ(cols.front(), "t");
  EXPECT_NE(std::find(cols.begin(), cols.end(), "Linf"), cols.end());
  EXPECT_NE(std::find(cols.begin(), cols.end(), "h2"), cols.end());
}

TEST(RateCheck, FreeLinearGaussian) {
  SpatialGrid g(1, 1024, 40.0);
  const auto tr = run(tdnls::testing::hermite_ground_state(g), Model{ZeroPotential{}, 1.0, Nonlinearity::zero()},
                      2.0, 1e-3, 10);
  const auto c = pseudo_energy_rate_check(tr.records);
  EXPECT_LE(c.max_defect, 1e-6);
  // analytic pseudo-energy 1/4 + (1 + t^2)/4 for the free Gaussian
  for (const auto& r : tr.records) EXPECT_NEAR(r.pseudoE, 0.25 + 0.25 * (1.0 + r.t * r.t), 1e-9);
}

TEST(RateCheck, StationaryGroundState) {
  SpatialGrid g(1, 512, 12.0);
  const auto tr = run(tdnls::testing::hermite_ground_state(g),
                      Model{IsotropicHarmonic{TimeFunction::constant(1.0)}, 1.0, Nonlinearity::zero()}, 1.0, 1e-3,
                      10);
  for (const auto& r : tr.records) EXPECT_NEAR(r.pseudo_energy_rate, 0.0, 1e-12);
  EXPECT_LT(pseudo_energy_rate_check(tr.records).max_defect, 1e-10);
}

TEST(RateCheck, NonlinearDefectShrinksQuadratically) {
  SpatialGrid g(1, 1024, 30.0);
  const Model m{IsotropicHarmonic{TimeFunction::power_decay(1.0, 3.0)}, 1.0};
  const auto u0 = gaussian(g, {{0.5, 0, 0}, 0.8, {0.3, 0, 0}});
  const auto coarse = pseudo_energy_rate_check(run(u0, m, 2.0, 2e-3, 10).records);
  const auto fine = pseudo_energy_rate_check(run(u0, m, 2.0, 1e-3, 10).records);
  EXPECT_GT(coarse.max_defect / fine.max_defect, 3.4);
  EXPECT_LT(coarse.max_defect / fine.max_defect, 4.6);
  EXPECT_LT(fine.max_defect, 1e-4) << fine.max_defect;
}

TEST(RateCheck, EnergyWithGrowingFrequency) {
  SpatialGrid g(1, 512, 16.0);
  const Model m{IsotropicHarmonic{TimeFunction::affine(1.0, 1.0)}, 1.0};
  const auto u0 = gaussian(g, {{1.0, 0, 0}, 1.0, {0, 0, 0}});
  const auto tr = run(u0, m, 1.0, 5e-4, 10);
  const auto c = energy_rate_check(tr.records, 1.0);
  EXPECT_TRUE(c.passes) << c.max_defect << " vs " << c.tolerance;
  const auto coarse = energy_rate_check(run(u0, m, 1.0, 1e-3, 10).records, 1.0);
  EXPECT_NEAR(coarse.max_defect / c.max_defect, 4.0, 0.6);
  // the energy is not conserved here
  EXPECT_GT(std::abs(tr.records.back().E - tr.records.front().E), 1e-2);
}

TEST(RateCheck, NeedsThreeRecords) {
  std::vector<DiagnosticsRecord> two(2);
  EXPECT_THROW(pseudo_energy_rate_check(two), ValidationError);
}

TEST(JNorm, ConservedUnderFreeFlow) {
  SpatialGrid g(1, 2048, 60.0);
  const auto tr = run(tdnls::testing::hermite_ground_state(g), Model{ZeroPotential{}, 1.0, Nonlinearity::zero()},
                      3.0, 1e-2, 10);
  for (const auto& r : tr.records) EXPECT_NEAR(r.J_norm, 1.0 / std::sqrt(2.0), 1e-9);
  EXPECT_NEAR(j_norm(tr.final_state, 3.0), 1.0 / std::sqrt(2.0), 1e-9);
}

TEST(Decay, TrivialAndSupNormCases) {
  SpatialGrid g(1, 2048, 60.0);
  const auto tr = run(tdnls::testing::hermite_ground_state(g), Model{ZeroPotential{}, 1.0, Nonlinearity::zero()},
                      3.0, 1e-2, 10);
  const auto r2 = decay_check(tr.records, 2.0, 1, 1.0 + 1e-12);
  EXPECT_EQ(r2.delta, 0.0);
  EXPECT_NEAR(r2.fitted_constant, 1.0, 1e-12);
  const auto rinf = decay_check(tr.records, std::numeric_limits<double>::infinity(), 1);
  EXPECT_DOUBLE_EQ(rinf.delta, 0.5);
  EXPECT_TRUE(rinf.passes) << rinf.fitted_constant;
  EXPECT_THROW(decay_check(tr.records, 8.0, 3), ValidationError);
}

TEST(PseudoConformal, QuinticVFrameRun) {
  SpatialGrid g(1, 1024, 30.0);
  const auto u0 = gaussian(g, {{0, 0, 0}, 1.0, {0, 0, 0}});
  // d sigma = 2 and constant H: the law is an exact conservation
  const Model flat{ZeroPotential{}, 2.0, Nonlinearity::of(TimeFunction::constant(1.0))};
  const auto a = run(u0, flat, 0.5, 5e-4, 10, true, -0.5);
  const auto ca = pseudo_conformal_check(a.records, flat, 1);
  EXPECT_TRUE(ca.passes) << ca.max_defect << " vs " << ca.tolerance;

  const Model growing{ZeroPotential{}, 2.0, Nonlinearity::of(TimeFunction::affine(1.0, 0.5))};
  const auto b = run(u0, growing, 1.0, 5e-4, 10, true);
  const auto cb = pseudo_conformal_check(b.records, growing, 1);
  EXPECT_TRUE(cb.passes) << cb.max_defect << " vs " << cb.tolerance;

  const auto u_frame = run(u0, Model{}, 0.1, 1e-3, 10);
  EXPECT_THROW(pseudo_conformal_check(u_frame.records, Model{}, 1), ValidationError);
}
