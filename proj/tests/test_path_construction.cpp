#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "cbdi/errors.hpp"
#include "cbdi/path_construction.hpp"

using namespace cbdi;

namespace {

// delta = phi'(inf) = 2 < inf, so excursions are simulable
BranchingMechanism jump_mech() { return BranchingMechanism{1.0, 0.0, LevyMeasure::unit_atom(1.0)}; }
BranchingMechanism cir_mech() { return BranchingMechanism{0.0, 1.0, LevyMeasure::zero()}; }

ConstructionParams params(std::uint64_t path_id = 0, double dt = 1e-2) {
  ConstructionParams p;
  p.dt = dt;
  p.seed = 7;
  p.path_id = path_id;
  return p;
}

DeterministicRates constant_field(double rho, double g) {
  DeterministicRates r;
  r.rho = [rho](double) { return rho; };
  r.g_time = [g](double) { return g; };
  return r;
}

}  // namespace

TEST(EvaluateField, ZeroRatesReturnBasePath) {
  for (auto mech : {jump_mech(), cir_mech()}) {
    ConstructionState st(mech, LevyMeasure::exponential(1.0, 2.0), params());
    auto f = evaluate_field(st, DeterministicRates{});
    EXPECT_EQ(f.Y, st.base().values);
    EXPECT_EQ(st.pool_size(), 0u);
  }
}

TEST(EvaluateField, InfiniteSlopeWithRhoIsUnsupported) {
  ConstructionState st(cir_mech(), LevyMeasure::zero(), params());
  try {
    evaluate_field(st, constant_field(1.0, 0.0));
    FAIL() << "expected UnsupportedRegime";
  } catch (const UnsupportedRegime& e) {
    EXPECT_NE(std::string(e.what()).find("excursion construction requires φ′(∞)<∞"), std::string::npos);
  }
  // immigration through g alone stays available
  EXPECT_NO_THROW(evaluate_field(st, constant_field(0.0, 1.0)));
}

TEST(EvaluateField, ForcedImmigrantIsCausal) {
  ConstructionState st(jump_mech(), LevyMeasure::unit_atom(1.0), params(3, 1e-3));
  st.drop(AtomKind::Immigration, [](const PoissonAtom&) { return true; });
  st.inject(AtomKind::Immigration, PoissonAtom{0.5, 1.0, 0.0, 0.0, 0});
  auto f = evaluate_field(st, constant_field(0.0, 1.0));
  for (std::size_t j = 0; j < 500; ++j) EXPECT_EQ(f.Y[j], f.X[j]) << j;
  EXPECT_DOUBLE_EQ(f.immigrant_sum[500], 1.0);
  EXPECT_DOUBLE_EQ(evaluate_field(st, constant_field(0.0, 1.0), 0.499), f.X[499]);
}

TEST(EvaluateField, DecompositionAddsUpAndDominatesBase) {
  ConstructionState st(jump_mech(), LevyMeasure::exponential(1.0, 2.0), params(5));
  auto f = evaluate_field(st, constant_field(2.0, 1.0));
  for (std::size_t j = 0; j < f.size(); ++j) {
    EXPECT_DOUBLE_EQ(f.Y[j], f.X[j] + f.drift[j] + f.excursion_sum[j] + f.immigrant_sum[j]);
    EXPECT_GE(f.Y[j], f.X[j]);
  }
  // drift term is 2 int_0^t e^{-2(t-s)} ds = 1 - e^{-2t}
  EXPECT_NEAR(f.drift.back(), 1.0 - std::exp(-2.0), 1e-12);
  EXPECT_GT(f.truncation_bias_bound, 0.0);
}

TEST(EvaluateField, ChildTrajectoriesAreReused) {
  ConstructionState st(jump_mech(), LevyMeasure::exponential(1.0, 2.0), params(11));
  auto a = evaluate_field(st, constant_field(2.0, 1.0));
  std::size_t pool = st.pool_size();
  auto b = evaluate_field(st, constant_field(2.0, 1.0));
  EXPECT_EQ(pool, st.pool_size());
  EXPECT_EQ(a.Y, b.Y);
}

TEST(EvaluateField, ConstantRateMeanMatchesFormula) {
  // E Y_t = e^{-bt} x0 + int_0^t e^{-b(t-s)} (beta + int z nu) ds, b = 1, beta = 1, int z nu = 1/2
  const double target = std::exp(-1.0) + 1.5 * (1.0 - std::exp(-1.0));
  RunningStats s;
  double bias = 0.0;
  for (std::uint64_t r = 0; r < 2000; ++r) {
    ConstructionState st(jump_mech(), LevyMeasure::exponential(1.0, 2.0), params(r));
    auto f = evaluate_field(st, constant_field(1.0, 1.0));
    s.add(f.Y.back());
    bias = std::max(bias, f.truncation_bias_bound);
  }
  EXPECT_LE(std::abs(s.mean() - target), 3.0 * s.std_error() + bias)
      << s.mean() << " vs " << target << " se " << s.std_error();
}

TEST(Picard, NoRatesConvergeAtOnceToBase) {
  ConstructionState st(cir_mech(), LevyMeasure::zero(), params());
  auto rep = picard_solve(st, DependentRates::none());
  EXPECT_TRUE(rep.converged);
  EXPECT_EQ(rep.iterations, 1);
  EXPECT_EQ(rep.field.Y, st.base().values);
}

TEST(Picard, ConstantRatesConvergeInTwo) {
  auto nu = LevyMeasure::exponential(1.0, 2.0);
  ConstructionState st(jump_mech(), nu, params(2));
  auto rep = picard_solve(st, DependentRates::constant(1.0, nu));
  EXPECT_TRUE(rep.converged);
  EXPECT_EQ(rep.iterations, 2);
  EXPECT_EQ(rep.sup_diffs[1], 0.0);
}

TEST(Picard, LipschitzRatesContract) {
  auto nu = LevyMeasure::exponential(1.0, 2.0);
  for (std::uint64_t r = 0; r < 20; ++r) {
    ConstructionState st(jump_mech(), nu, params(r));
    auto rep = picard_solve(st, DependentRates::shifted_branching(0.3, nu));
    ASSERT_TRUE(rep.converged) << r;
    EXPECT_LT(rep.worst_ratio(1), 1.0) << r;
    for (std::size_t j = 0; j < rep.field.size(); ++j) ASSERT_GE(rep.field.Y[j], rep.field.X[j]);
  }
}

TEST(Picard, CausalUnderAtomDeletion) {
  auto nu = LevyMeasure::exponential(1.0, 2.0);
  auto rates = DependentRates::shifted_branching(0.5, nu);
  ConstructionState full(jump_mech(), nu, params(4, 1e-3));
  ConstructionState cut(jump_mech(), nu, params(4, 1e-3));
  auto late = [](const PoissonAtom& a) { return a.s > 0.6; };
  cut.drop(AtomKind::Immigration, late);
  cut.drop(AtomKind::Excursion, late);
  auto a = picard_solve(full, rates);
  auto b = picard_solve(cut, rates);
  for (std::size_t j = 0; j <= 600; ++j) ASSERT_EQ(a.field.Y[j], b.field.Y[j]) << j;
}

TEST(Picard, ExtraImmigrantNeverLowersPath) {
  auto nu = LevyMeasure::exponential(1.0, 2.0);
  auto rates = DependentRates::shifted_branching(0.5, nu);
  ConstructionState base(jump_mech(), nu, params(9));
  ConstructionState more(jump_mech(), nu, params(9));
  more.inject(AtomKind::Immigration, PoissonAtom{0.3, 0.7, 0.0, 0.0, 0});
  auto a = picard_solve(base, rates);
  auto b = picard_solve(more, rates);
  for (std::size_t j = 0; j < a.field.size(); ++j) {
    ASSERT_GE(b.field.Y[j], a.field.Y[j]) << j;
    if (j < 30) ASSERT_EQ(b.field.Y[j], a.field.Y[j]) << j;
  }
}

TEST(Picard, LocalizationOverflowNamesLevel) {
  auto nu = LevyMeasure::exponential(1.0, 2.0);
  ConstructionState st(jump_mech(), nu, params(1));
  PicardParams p;
  p.level0 = 0.25;
  p.max_level = 0.5;
  try {
    picard_solve(st, DependentRates::shifted_branching(0.5, nu), p);
    FAIL() << "expected LocalizationError";
  } catch (const LocalizationError& e) {
    EXPECT_GT(e.level(), 0.5);
  }
}

TEST(Compare, IdenticalRatesHaveZeroGap) {
  auto nu = LevyMeasure::exponential(1.0, 2.0);
  ConstructionState st(jump_mech(), nu, params(1));
  auto rates = DependentRates::shifted_branching(0.4, nu);
  auto rep = coupled_compare(st, rates, rates);
  EXPECT_TRUE(rep.converged);
  EXPECT_EQ(rep.max_gap, 0.0);
  EXPECT_EQ(rep.violations, 0u);
}

TEST(Compare, OrderedPresetPairsHoldPathwise) {
  auto nu = LevyMeasure::exponential(1.0, 2.0);
  std::vector<std::pair<DependentRates, DependentRates>> pairs{
      {DependentRates::none(), DependentRates::constant(1.0, nu)},
      {DependentRates::competition(1.0, 0.9), DependentRates::competition(1.0, 0.3)},
      {DependentRates::shifted_branching(0.2, nu), DependentRates::shifted_branching(0.6, nu)},
  };
  for (const auto& [lo, hi] : pairs)
    for (std::uint64_t r = 0; r < 25; ++r) {
      ConstructionState st(jump_mech(), nu, params(r));
      auto rep = coupled_compare(st, lo, hi);
      ASSERT_TRUE(rep.converged);
      ASSERT_EQ(rep.violations, 0u) << lo.name << " vs " << hi.name << " replicate " << r;
    }
}

TEST(Compare, ReversedHypothesisIsRefused) {
  auto nu = LevyMeasure::exponential(1.0, 2.0);
  ConstructionState st(jump_mech(), nu, params());
  EXPECT_THROW(coupled_compare(st, DependentRates::constant(2.0, nu), DependentRates::constant(1.0, nu)),
               HypothesisViolation);
}

TEST(Uniqueness, ShiftedStartReachesSameLimit) {
  auto nu = LevyMeasure::exponential(1.0, 2.0);
  for (std::uint64_t r = 0; r < 5; ++r) {
    ConstructionState st(jump_mech(), nu, params(r));
    auto rep = pathwise_uniqueness_check(st, DependentRates::shifted_branching(0.5, nu), 1.0);
    EXPECT_TRUE(rep.passed(1e-8)) << rep.sup_gap;
  }
}

TEST(Uniqueness, ConstantAndZeroRates) {
  auto nu = LevyMeasure::exponential(1.0, 2.0);
  ConstructionState st(jump_mech(), nu, params(8));
  auto c = pathwise_uniqueness_check(st, DependentRates::constant(1.0, nu), 3.0);
  EXPECT_EQ(c.sup_gap, 0.0);
  EXPECT_EQ(c.from_shifted.iterations, 2);
  auto z = pathwise_uniqueness_check(st, DependentRates::none(), 3.0);
  EXPECT_EQ(z.sup_gap, 0.0);
  EXPECT_EQ(z.from_shifted.field.Y, st.base().values);
}

TEST(Kuznetsov, ZeroLambdaIsZero) {
  auto rep = kuznetsov_marginal_check(jump_mech(), 1.0, 0.0, 200);
  EXPECT_EQ(rep.analytic, 0.0);
  EXPECT_EQ(rep.estimate.value, 0.0);
  EXPECT_TRUE(rep.passed);
}

TEST(Kuznetsov, ShortTimeBothSidesSmall) {
  auto rep = kuznetsov_marginal_check(jump_mech(), 1e-3, 1.0, 20000);
  EXPECT_LT(rep.analytic, 1e-3);
  EXPECT_TRUE(rep.passed) << rep.estimate.value << " vs " << rep.analytic;
}

TEST(Kuznetsov, UnitAtomMarginal) {
  auto rep = kuznetsov_marginal_check(jump_mech(), 1.0, 1.0, 4000, 3, 1e-3);
  CumulantSolution sol(jump_mech());
  EXPECT_NEAR(rep.analytic, sol.v(1.0, 1.0) - std::exp(-2.0), 1e-12);
  EXPECT_TRUE(rep.passed) << rep.estimate.value << " +- " << rep.estimate.std_error << " vs " << rep.analytic;
}

TEST(Kuznetsov, InfiniteSlopeUnsupported) {
  EXPECT_THROW(kuznetsov_marginal_check(cir_mech(), 1.0, 1.0, 10), UnsupportedRegime);
}

TEST(Decomposition, CsvColumns) {
  ConstructionState st(jump_mech(), LevyMeasure::zero(), params());
  std::ostringstream os;
  write_decomposition_csv(os, evaluate_field(st, constant_field(1.0, 0.0)));
  std::istringstream in(os.str());
  std::string tag, header;
  std::getline(in, tag);
  std::getline(in, header);
  EXPECT_EQ(tag, "# cbdi-decomposition v1");
  EXPECT_EQ(header, "t,X,continuous_drift_term,excursion_sum,immigrant_sum,Y");
}
