#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <numbers>
#include <sstream>

#include "tdnls/lens.hpp"
#include "tdnls/solver.hpp"
#include "test_support.hpp"

using namespace tdnls;
using tdnls::testing::Gen;
using tdnls::testing::loglog_slope;
using tdnls::testing::relative_l2;

namespace {

const HillState kCanonical{0.0, 1.0, 1.0, 0.0};

// Kutta's 3/8-rule integrator for x'' = -Omega x, written independently of solve_hill.
std::array<double, 2> integrate_38(const TimeFunction& omega, double t0, double t1, std::array<double, 2> y,
                                   int steps) {
  const double h = (t1 - t0) / steps;
  auto f = [&](double t, const std::array<double, 2>& s) { return std::array<double, 2>{s[1], -omega(t) * s[0]}; };
  auto add = [](std::array<double, 2> s, const std::array<double, 2>& k, double c) {
    s[0] += c * k[0];
    s[1] += c * k[1];
    return s;
  };
  double t = t0;
  for (int i = 0; i < steps; ++i) {
    const auto k1 = f(t, y);
    const auto k2 = f(t + h / 3, add(y, k1, h / 3));
    auto y3 = add(y, k1, -h / 3);
    y3 = add(y3, k2, h);
    const auto k3 = f(t + 2 * h / 3, y3);
    auto y4 = add(y, k1, h);
    y4 = add(y4, k2, -h);
    y4 = add(y4, k3, h);
    const auto k4 = f(t + h, y4);
    for (int c = 0; c < 2; ++c) y[c] += h / 8 * (k1[c] + 3 * k2[c] + 3 * k3[c] + k4[c]);
    t += h;
  }
  return y;
}

const ScatteringPair& decaying_pair() {
  static const ScatteringPair pair = [] {
    PairOptions po;
    po.T = 20.0;
    po.T_max = 2000.0;
    return construct_scattering_pair(TimeFunction::power_decay(1.0, 3.0), po);
  }();
  return pair;
}

std::shared_ptr<const LensMap> decaying_map(int dim, double sigma) {
  const auto omega = TimeFunction::power_decay(1.0, 3.0);
  return std::make_shared<const LensMap>(extend_backward(decaying_pair().solution, omega, 0.0), dim, sigma);
}

}  // namespace

TEST(Hill, FreeSolution) {
  const auto s = solve_hill(TimeFunction::constant(0.0), kCanonical, uniform_mesh(0.0, 5.0, 1e-2));
  for (double t : {0.0, 0.123, 2.5, 5.0}) {
    const auto st = s.at(t);
    EXPECT_NEAR(st.mu, t, 1e-13);
    EXPECT_NEAR(st.nu, 1.0, 1e-13);
  }
}

TEST(Hill, HarmonicMatchesCosSin) {
  const auto s = solve_hill(TimeFunction::constant(1.0), kCanonical, uniform_mesh(0.0, 1.5, 1e-3));
  for (double t = 0.0; t <= 1.5; t += 0.0137) {
    const auto st = s.at(t);
    EXPECT_NEAR(st.nu, std::cos(t), 1e-8);
    EXPECT_NEAR(st.mu, std::sin(t), 1e-8);
    EXPECT_NEAR(st.nu_dot, -std::sin(t), 1e-8);
    EXPECT_NEAR(st.mu_dot, std::cos(t), 1e-8);
  }
}

TEST(Hill, RepulsiveMatchesCoshSinh) {
  const double r = std::sqrt(2.0);
  const auto s = solve_hill(TimeFunction::constant(-2.0), kCanonical, uniform_mesh(0.0, 3.0, 1e-3));
  for (double t : {0.5, 1.7, 3.0}) {
    const auto st = s.at(t);
    EXPECT_NEAR(st.nu / std::cosh(r * t), 1.0, 1e-9);
    EXPECT_NEAR(st.mu / (std::sinh(r * t) / r), 1.0, 1e-9);
  }
}

TEST(Hill, WronskianDriftOnCatalog) {
  const std::vector<TimeFunction> catalog{TimeFunction::constant(0.7), TimeFunction::constant(-2.0),
                                          TimeFunction::power_decay(1.0, 3.0), TimeFunction::power_decay(-0.5, 2.5),
                                          TimeFunction::oscillatory(), TimeFunction::affine(0.1, 0.02)};
  for (const auto& w : catalog) {
    const auto s = solve_hill(w, kCanonical, uniform_mesh(0.0, 1.2, 1e-3));
    EXPECT_LE(s.max_wronskian_defect(), 1e-9) << w.describe();
  }
}

TEST(Hill, GuardsAndValidation) {
  try {
    solve_hill(TimeFunction::constant(1.0), kCanonical, uniform_mesh(0.0, 2.0, 1e-3));
    FAIL() << "expected nu to vanish";
  } catch (const NumericalGuardError& e) {
    EXPECT_NEAR(e.time(), std::numbers::pi / 2.0, 1e-3);
  }
  EXPECT_THROW(solve_hill(TimeFunction::constant(0.0), HillState{0.0, 2.0, 1.0, 0.0}, uniform_mesh(0.0, 1.0, 0.1)),
               ValidationError);
  EXPECT_THROW(solve_hill(TimeFunction::constant(0.0), kCanonical, {0.0}), ValidationError);
  EXPECT_THROW(solve_hill(TimeFunction::constant(0.0), kCanonical, {0.0, 1.0, 0.5}), ValidationError);
}

TEST(Hill, DenseOutputIsAccurateBetweenNodes) {
  const auto s = solve_hill(TimeFunction::constant(1.0), kCanonical, uniform_mesh(0.0, 1.0, 0.05));
  for (double t = 0.01; t < 1.0; t += 0.05) EXPECT_NEAR(s.at(t).nu, std::cos(t), 1e-6);
  EXPECT_THROW(s.at(1.5), std::out_of_range);
}

TEST(Pair, ZeroFrequencyIsTheFreePair) {
  const auto pair = construct_scattering_pair(TimeFunction::constant(0.0));
  EXPECT_EQ(pair.contraction, 0.0);
  for (double t : {20.0, 100.0, 1999.0}) {
    const auto st = pair.solution.at(t);
    EXPECT_NEAR(st.nu, 1.0, 1e-14);
    EXPECT_NEAR(st.mu, t, 1e-10);
  }
}

TEST(Pair, DecayingFrequencyAsymptotics) {
  const auto& pair = decaying_pair();
  EXPECT_LT(pair.contraction, 0.1);
  EXPECT_LE(pair.wronskian_defect, 1e-6);
  ASSERT_TRUE(pair.tail_bound.has_value());
  std::vector<double> ts, nu_defect, mud_defect;
  for (double t = 50.0; t <= 1000.0; t *= 1.25) {
    const auto st = pair.solution.at(t);
    ts.push_back(t);
    nu_defect.push_back(st.nu - 1.0);
    mud_defect.push_back(st.mu_dot - 1.0);
  }
  EXPECT_NEAR(loglog_slope(ts, nu_defect), -1.0, 0.2);
  EXPECT_NEAR(loglog_slope(ts, mud_defect), -1.0, 0.2);
}

TEST(Pair, MuDefectGrowsLogarithmicallyAtGammaThree) {
  // mu - t = O(t^{3 - gamma}) is bounded for gamma > 3; gamma = 3 is the boundary case and grows like log t.
  const auto& pair = decaying_pair();
  std::vector<double> lt, d;
  for (double t = 50.0; t <= 2000.0; t *= 1.5) {
    lt.push_back(std::log(t));
    d.push_back(pair.solution.at(t).mu - t);
  }
  for (std::size_t i = 1; i < d.size(); ++i) EXPECT_GT(d[i], d[i - 1]);
  const double slope = (d.back() - d.front()) / (lt.back() - lt.front());
  EXPECT_GT(slope, 0.3);
  EXPECT_LT(slope, 1.2);
}

TEST(Pair, AgreesWithBackwardOdeOracle) {
  const auto& pair = decaying_pair();
  const auto omega = TimeFunction::power_decay(1.0, 3.0);
  const auto end = pair.solution.states().back();
  const double t1 = pair.solution.t_max();
  for (double t : {1000.0, 200.0, 20.0}) {
    const int steps = static_cast<int>((t1 - t) / 0.01);
    const auto nu = integrate_38(omega, t1, t, {end.nu, end.nu_dot}, steps);
    const auto mu = integrate_38(omega, t1, t, {end.mu, end.mu_dot}, steps);
    const auto st = pair.solution.at(t);
    EXPECT_NEAR(st.nu, nu[0], 1e-6);
    EXPECT_NEAR(st.nu_dot, nu[1], 1e-6);
    EXPECT_NEAR(st.mu / mu[0], 1.0, 1e-6);
    EXPECT_NEAR(st.mu_dot, mu[1], 1e-6);
  }
}

TEST(Pair, BackwardExtensionKeepsWronskian) {
  const auto omega = TimeFunction::power_decay(1.0, 3.0);
  const auto hill = extend_backward(decaying_pair().solution, omega, 0.0);
  EXPECT_EQ(hill.t_min(), 0.0);
  EXPECT_LE(hill.max_wronskian_defect(), 1e-9);
  EXPECT_GT(hill.min_nu(), 0.0);
}

TEST(Pair, RejectsBadOptions) {
  PairOptions po;
  po.T = 20.0;
  po.T_max = 100.0;
  EXPECT_THROW(construct_scattering_pair(TimeFunction::power_decay(1.0, 3.0), po), ValidationError);
  PairOptions strong;
  strong.T = 1.0;
  EXPECT_THROW(construct_scattering_pair(TimeFunction::power_decay(100.0, 3.0), strong), ValidationError);
  EXPECT_THROW(construct_scattering_pair(TimeFunction::power_decay(1.0, 2.0)), ValidationError);
  PairOptions few;
  few.panels = 1;
  EXPECT_THROW(construct_scattering_pair(TimeFunction::power_decay(1.0, 3.0), few), ValidationError);
}

TEST(LensMapTest, Identities) {
  const auto map = decaying_map(1, 2.0);
  for (double t : {0.0, 0.7, 5.0, 30.0, 500.0}) {
    const auto st = map->hill().at(t);
    EXPECT_NEAR(map->zeta(t), st.mu / st.nu, 1e-14 * (1 + std::abs(map->zeta(t))));
    EXPECT_NEAR(map->a(t), st.nu_dot / st.nu, 1e-14);
    EXPECT_EQ(map->b(t), st.nu);
    EXPECT_NEAR(map->zeta_inverse(map->zeta(t)), t, 1e-9 * (1 + t));
    // d sigma = 2: H is identically 1
    EXPECT_EQ(map->H(map->zeta(t)), 1.0);
    EXPECT_EQ(map->H_dot(map->zeta(t)), 0.0);
  }
  const auto& z = map->zeta_samples();
  for (std::size_t i = 1; i < z.size(); ++i) EXPECT_GT(z[i], z[i - 1]);
  EXPECT_THROW(map->zeta_inverse(map->s_max() + 1.0), ValidationError);
}

TEST(LensMapTest, HDotDecaysLikeInverseSquare) {
  const auto map = decaying_map(1, 3.0);
  std::vector<double> s, hd;
  for (double t = 100.0; t <= 1000.0; t *= 1.3) {
    s.push_back(map->zeta(t));
    hd.push_back(map->H_dot(map->zeta(t)));
  }
  EXPECT_NEAR(loglog_slope(s, hd), -2.0, 0.3);
  for (double t : {1.0, 10.0, 100.0}) EXPECT_NEAR(map->H(map->zeta(t)), 1.0 / map->b(t), 1e-9);
}

TEST(LensMapTest, SystemResiduals) {
  for (double sigma : {2.0, 3.0}) {
    const auto r = decaying_map(1, sigma)->residuals();
    EXPECT_LE(r.max(), 1e-7) << r.b_equation << " " << r.a_equation << " " << r.zeta_equation << " " << r.h_identity;
  }
}

TEST(Transform, FreePairIsIdentity) {
  SpatialGrid g(1, 256, 12.0);
  const LensMap map(solve_hill(TimeFunction::constant(0.0), kCanonical, uniform_mesh(0.0, 1.0, 0.01)), 1, 2.0);
  Gen gen(3);
  const auto u = gen.smooth_field(g);
  EXPECT_LT(relative_l2(lens_forward(u, map, 0.5), u), 1e-13);
  EXPECT_LT(relative_l2(lens_inverse(u, map, 0.5), u), 1e-13);
}

TEST(Transform, MassAndRoundtrip) {
  const auto map = decaying_map(1, 2.0);
  SpatialGrid g(1, 1024, 30.0);
  Gen gen(19);
  for (double t : {0.0, 1.0, 3.0}) {
    GaussianData gd;
    gd.center[0] = gen.uniform(-1, 1);
    gd.width = gen.uniform(0.5, 1.0);
    gd.velocity[0] = gen.uniform(-1, 1);
    const auto u = gaussian(g, gd);
    const auto v = lens_inverse(u, *map, t);
    EXPECT_NEAR(mass(v) / mass(u), 1.0, 1e-8) << t;
    EXPECT_LT(relative_l2(lens_forward(v, *map, t), u), 1e-7) << t;
  }
}

TEST(Transform, BoxExitIsReported) {
  const auto map = decaying_map(1, 2.0);
  SpatialGrid g(1, 256, 10.0);
  // b(0) < 1 so lens_forward stretches by b and lens_inverse by 1/b; an edge bump leaves the box
  ASSERT_LT(map->b(0.0), 0.5);
  const auto edge = gaussian(g, {{8.0, 0, 0}, 0.5, {0, 0, 0}});
  EXPECT_THROW(lens_inverse(edge, *map, 0.0), ValidationError);
  EXPECT_NO_THROW(lens_forward(edge, *map, 0.0));
}

TEST(Transform, ShortLensEquivalence) {
  const auto omega = TimeFunction::power_decay(1.0, 3.0);
  const auto map = decaying_map(1, 2.0);
  SpatialGrid g(1, 1024, 30.0);
  const auto u0 = gaussian(g);
  const double t = 0.5;
  SolverConfig cu;
  cu.t_end = t;
  cu.diagnostics_stride = 1 << 20;
  const auto direct = evolve(u0, Model{IsotropicHarmonic{omega}, 2.0, Nonlinearity::unit()}, cu);
  SolverConfig cv = cu;
  cv.t_start = map->zeta(0.0);
  cv.t_end = map->zeta(t);
  const auto lens = evolve(lens_inverse(u0, *map, 0.0), Model{ZeroPotential{}, 2.0, lens_nonlinearity(map)}, cv);
  EXPECT_LT(relative_l2(lens_forward(lens.final_state, *map, t), direct.final_state), 1e-4);
}

TEST(Monotone, PreservesMonotonicityAndLinearData) {
  Gen gen(5);
  for (int rep = 0; rep < 50; ++rep) {
    const int n = gen.integer(2, 30);
    std::vector<double> x{0.0}, y{gen.uniform(-1, 1)};
    for (int i = 1; i < n; ++i) {
      x.push_back(x.back() + gen.log_uniform(1e-3, 2.0));
      y.push_back(y.back() + (gen.coin() ? 0.0 : gen.log_uniform(1e-4, 5.0)));
    }
    const MonotoneCubic f(x, y);
    double prev = -std::numeric_limits<double>::infinity();
    for (int k = 0; k <= 400; ++k) {
      const double xs = std::min(x.back(), x.front() + (x.back() - x.front()) * k / 400.0);
      const double v = f(xs);
      EXPECT_GE(v, prev - 1e-12);
      prev = v;
    }
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(f(x[i]), y[i], 1e-12 * (1 + std::abs(y[i])));
  }
  const MonotoneCubic lin({0.0, 1.0, 3.0, 4.0}, {1.0, 3.0, 7.0, 9.0});
  EXPECT_NEAR(lin(2.2), 5.4, 1e-14);
  EXPECT_THROW(MonotoneCubic({0.0, 1.0, 2.0}, {0.0, 1.0, 0.5}), ValidationError);
  EXPECT_THROW(lin(5.0), std::out_of_range);
}

TEST(HillCsv, HeaderAndRows) {
  const auto s = solve_hill(TimeFunction::constant(0.0), kCanonical, uniform_mesh(0.0, 1.0, 0.25));
  std::ostringstream os;
  write_hill_csv(os, s, 1, 2.0);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "t,mu,mu_dot,nu,nu_dot,W,zeta,H");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  EXPECT_EQ(rows, 5);
}
