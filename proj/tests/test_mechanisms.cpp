#include <gtest/gtest.h>

#include <cmath>

#include "cbdi/mechanisms.hpp"

using namespace cbdi;

TEST(LevyMeasure, AtomicMomentsAndTails) {
  auto m = LevyMeasure::atomic({{1.0, 2.0}, {0.5, 1.0}});
  EXPECT_DOUBLE_EQ(m.tail_mass(0.5), 3.0);
  EXPECT_DOUBLE_EQ(m.tail_mass(0.6), 2.0);
  EXPECT_DOUBLE_EQ(m.partial_moment(1, 0.0), 2.5);
  EXPECT_DOUBLE_EQ(m.partial_moment(2, 0.0, 1.0), 0.25);
  EXPECT_DOUBLE_EQ(m.support_upper(), 1.0);
}

TEST(LevyMeasure, ExponentialClosedFormsMatchQuadrature) {
  auto m = LevyMeasure::exponential(1.5, 2.0);
  for (int p = 0; p <= 2; ++p) {
    double closed = m.partial_moment(p, 0.3, 4.0);
    double quad = m.integrate([p](double z) { return std::pow(z, p); }, 0.3, 4.0);
    EXPECT_NEAR(closed, quad, 1e-10) << "p=" << p;
  }
  for (double lam : {0.1, 1.0, 7.0}) {
    double bq = m.integrate([lam](double z) { return std::expm1(-z * lam) + z * lam; });
    EXPECT_NEAR(m.branching_integral(lam), bq, 1e-10);
    double iq = m.integrate([lam](double z) { return -std::expm1(-z * lam); });
    EXPECT_NEAR(m.immigration_integral(lam), iq, 1e-10);
  }
}

TEST(LevyMeasure, StableClosedFormsMatchQuadrature) {
  auto m = LevyMeasure::stable(0.7, 1.5);
  EXPECT_TRUE(std::isinf(m.partial_moment(1, 0.0)));
  EXPECT_NEAR(m.tail_mass(0.25), 0.7 / 1.5 * std::pow(0.25, -1.5), 1e-12);
  for (double lam : {0.5, 2.0}) {
    double quad = m.integrate([lam](double z) { return expm1_plus_x(lam * z); });
    EXPECT_NEAR(m.branching_integral(lam), quad, 1e-7 * std::abs(quad));
  }
  auto nu = LevyMeasure::stable(0.4, 0.5);
  double quad = nu.integrate([](double z) { return -std::expm1(-1.3 * z); });
  EXPECT_NEAR(nu.immigration_integral(1.3), quad, 1e-7 * quad);
}

TEST(LevyMeasure, SampleAboveInvertsTail) {
  auto m = LevyMeasure::stable(1.0, 0.8, 0.0, 50.0);
  const double eps = 0.1;
  for (double u : {0.1, 0.5, 0.9}) {
    double z = m.sample_above(eps, u);
    double frac = m.partial_moment(0, eps, z) / m.tail_mass(eps);
    EXPECT_NEAR(frac, u, 1e-12);
  }
  auto e = LevyMeasure::exponential(2.0, 3.0);
  double z = e.sample_above(0.2, 0.5);
  EXPECT_NEAR(e.partial_moment(0, 0.2, z) / e.tail_mass(0.2), 0.5, 1e-12);
  auto a = LevyMeasure::atomic({{1.0, 1.0}, {2.0, 3.0}});
  EXPECT_DOUBLE_EQ(a.sample_above(0.5, 0.2), 1.0);
  EXPECT_DOUBLE_EQ(a.sample_above(0.5, 0.3), 2.0);
  EXPECT_DOUBLE_EQ(a.sample_above(1.5, 0.01), 2.0);
}

TEST(LevyMeasure, RejectsInvalidParameters) {
  EXPECT_THROW(LevyMeasure::atomic({{-1.0, 1.0}}), std::invalid_argument);
  EXPECT_THROW(LevyMeasure::exponential(1.0, 0.0), std::invalid_argument);
  EXPECT_THROW(LevyMeasure::stable(1.0, 2.5), std::invalid_argument);
  // int (z ^ z^2) m(dz) diverges at infinity for alpha <= 1
  EXPECT_THROW(BranchingMechanism(0.0, 0.0, LevyMeasure::stable(1.0, 0.5)), std::invalid_argument);
  EXPECT_THROW(BranchingMechanism(0.0, -1.0), std::invalid_argument);
  // int (1 ^ z) nu(dz) diverges at zero for alpha >= 1
  EXPECT_THROW(ImmigrationMechanism(0.0, LevyMeasure::stable(1.0, 1.2)), std::invalid_argument);
}

TEST(Phi, SpecExamples) {
  BranchingMechanism quad(1.0, 1.0);
  EXPECT_EQ(quad.phi(0.0), 0.0);
  EXPECT_DOUBLE_EQ(quad.phi(2.0), 6.0);
  BranchingMechanism atom(0.0, 0.0, LevyMeasure::unit_atom(1.0));
  EXPECT_NEAR(atom.phi(1.0), std::exp(-1.0), 1e-15);
  EXPECT_NEAR(atom.phi(1.0), 0.367879, 1e-6);
}

TEST(Phi, SlopeAtInfinity) {
  auto d1 = phi_prime_at_infinity(BranchingMechanism(1.0, 1.0));
  EXPECT_FALSE(d1.finite);
  EXPECT_TRUE(std::isinf(d1.value));

  BranchingMechanism atom(1.0, 0.0, LevyMeasure::unit_atom(1.0));
  auto d2 = phi_prime_at_infinity(atom);
  ASSERT_TRUE(d2.finite);
  EXPECT_DOUBLE_EQ(d2.value, 2.0);
  // numeric slope at 1e6
  const double lam = 1e6, h = 1.0;
  double slope = (atom.phi(lam + h) - atom.phi(lam)) / h;
  EXPECT_NEAR(slope, d2.value, 0.01 * d2.value);

  auto d3 = phi_prime_at_infinity(BranchingMechanism(-0.5, 0.0));
  ASSERT_TRUE(d3.finite);
  EXPECT_DOUBLE_EQ(d3.value, -0.5);

  // stable alpha in (1,2) has infinite first moment near 0
  EXPECT_FALSE(phi_prime_at_infinity(BranchingMechanism(0.0, 0.0, LevyMeasure::stable(1.0, 1.5))).finite);
}

TEST(Phi, ConvexWithNondecreasingDividedDifferences) {
  std::vector<BranchingMechanism> mechs{
      BranchingMechanism(1.0, 1.0),
      BranchingMechanism(-0.3, 0.2, LevyMeasure::atomic({{0.5, 1.0}, {2.0, 0.3}})),
      BranchingMechanism(0.1, 0.0, LevyMeasure::exponential(1.0, 1.5)),
      BranchingMechanism(0.0, 0.0, LevyMeasure::stable(0.5, 1.4)),
  };
  std::vector<double> grid;
  for (int i = 0; i <= 40; ++i) grid.push_back(0.05 * i * i);
  for (const auto& mech : mechs) {
    EXPECT_EQ(mech.phi(0.0), 0.0);
    double prev_slope = -kInf;
    for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
      double slope = (mech.phi(grid[i + 1]) - mech.phi(grid[i])) / (grid[i + 1] - grid[i]);
      EXPECT_GE(slope, prev_slope - 1e-9 * (1.0 + std::abs(slope))) << mech.describe();
      prev_slope = slope;
    }
  }
}

TEST(Phi, DerivativeMatchesFiniteDifference) {
  BranchingMechanism mech(0.2, 0.3, LevyMeasure::exponential(1.0, 2.0));
  for (double lam : {0.5, 3.0}) {
    const double h = 1e-5;
    double fd = (mech.phi(lam + h) - mech.phi(lam - h)) / (2 * h);
    EXPECT_NEAR(mech.phi_prime(lam), fd, 1e-7);
  }
}

TEST(Psi, SpecExamples) {
  ImmigrationMechanism drift(1.0);
  EXPECT_DOUBLE_EQ(drift.psi(3.0), 3.0);
  EXPECT_EQ(drift.psi(0.0), 0.0);
  ImmigrationMechanism atom(0.0, LevyMeasure::unit_atom(1.0));
  EXPECT_NEAR(atom.psi(1.0), 1.0 - std::exp(-1.0), 1e-15);
  EXPECT_NEAR(atom.psi(1.0), 0.632121, 1e-6);
  EXPECT_EQ(ImmigrationMechanism(2.0, LevyMeasure::stable(1.0, 0.5)).psi(0.0), 0.0);
}

TEST(RateFunction, CompositionDsl) {
  auto f = RateFunction::sum(RateFunction::identity().affine(2.0),
                             RateFunction::min(RateFunction::identity(), RateFunction::square()).affine(-0.5));
  EXPECT_DOUBLE_EQ(f(0.5), 1.0 - 0.125);
  EXPECT_DOUBLE_EQ(f(3.0), 6.0 - 1.5);
  auto capped = f.truncated(1.0);
  EXPECT_DOUBLE_EQ(capped(10.0), f(1.0));
  auto mx = RateFunction::max(RateFunction::constant(1.0), RateFunction::identity());
  EXPECT_DOUBLE_EQ(mx(0.2), 1.0);
  EXPECT_DOUBLE_EQ(mx(4.0), 4.0);
  EXPECT_THROW(f.truncated(-1.0), std::invalid_argument);
}

TEST(Conditions, LinearDriftPassesGrowth) {
  DependentRates r;
  r.beta = RateFunction::identity();
  r.growth_K = 1.0;
  r.modulus = Modulus::linear(1.0);
  auto rep = check_conditions(r, LevyMeasure::zero(), default_condition_grid());
  EXPECT_TRUE(rep.growth_ok());
  EXPECT_EQ(rep.growth_violation, 0.0);
  EXPECT_TRUE(rep.passed());
}

TEST(Conditions, SuperlinearDriftFailsGrowth) {
  DependentRates r;
  r.beta = RateFunction::square();
  r.growth_K = 5.0;
  r.modulus = Modulus::linear(1e9);
  auto grid = default_condition_grid();
  grid.push_back(50.0);  // 10 K
  auto rep = check_conditions(r, LevyMeasure::zero(), grid);
  EXPECT_FALSE(rep.growth_ok());
  EXPECT_GT(rep.worst_growth_x, 5.0);
}

TEST(Conditions, ShiftedBranchingPresetIsLipschitzWithComputedConstant) {
  auto nu = LevyMeasure::atomic({{0.5, 1.0}, {2.0, 0.25}});
  const double beta = 0.7;
  auto r = DependentRates::shifted_branching(beta, nu);
  // Lipschitz constant beta + int z nu(dz) = 0.7 + 0.5 + 0.5
  EXPECT_DOUBLE_EQ(r.modulus(1.0), 1.7);
  auto rep = check_conditions(r, nu, default_condition_grid());
  EXPECT_TRUE(rep.passed()) << rep.lipschitz_violation;
  // a smaller Lipschitz constant must be flagged
  r.modulus = Modulus::linear(1.0);
  EXPECT_FALSE(check_conditions(r, nu, default_condition_grid()).lipschitz_ok());
}

TEST(Conditions, CompetitionAndConstantPresets) {
  auto comp = DependentRates::competition(1.0, 0.4);
  EXPECT_TRUE(check_conditions(comp, LevyMeasure::zero(), default_condition_grid()).passed());
  auto nu = LevyMeasure::exponential(1.0, 2.0);
  auto cst = DependentRates::constant(1.0, nu);
  EXPECT_TRUE(check_conditions(cst, nu, default_condition_grid()).passed());
  EXPECT_THROW(check_conditions(cst, nu, {}), std::invalid_argument);
}

TEST(Modulus, LogLipschitzFamily) {
  auto r = Modulus::log_lipschitz(2.0);
  EXPECT_EQ(r(0.0), 0.0);
  EXPECT_DOUBLE_EQ(r(1.0), 2.0);
  EXPECT_DOUBLE_EQ(r(4.0), 8.0);
  EXPECT_NEAR(r(0.01), 2.0 * 0.01 * (1.0 + std::log(100.0)), 1e-15);
}
