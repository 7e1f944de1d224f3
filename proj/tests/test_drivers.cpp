#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "cbdi/drivers.hpp"
#include "cbdi/errors.hpp"
#include "cbdi/rng.hpp"
#include "cbdi/stats.hpp"

using namespace cbdi;

namespace {

DriverSpec spec_with(std::uint64_t seed, double T = 1.0) {
  DriverSpec s;
  s.seed = seed;
  s.horizon = T;
  return s;
}

bool same_atoms(const std::vector<PoissonAtom>& a, const std::vector<PoissonAtom>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].s != b[i].s || a[i].z != b[i].z || a[i].u != b[i].u || a[i].alpha != b[i].alpha || a[i].id != b[i].id)
      return false;
  return true;
}

}  // namespace

TEST(Philox, KnownAnswerVectors) {
  // Random123 reference vectors for philox4x32-10
  auto z = Philox4x32::generate({0, 0, 0, 0}, 0);
  EXPECT_EQ(z, (Philox4x32::Block{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
  auto f = Philox4x32::generate({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, 0xffffffffffffffffull);
  EXPECT_EQ(f, (Philox4x32::Block{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
  auto p = Philox4x32::generate({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                                (std::uint64_t{0x299f31d0u} << 32) | 0xa4093822u);
  EXPECT_EQ(p, (Philox4x32::Block{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(CounterStream, UniformAndNormalMoments) {
  CounterStream rng(42, 7, 0);
  RunningStats u, n;
  for (int i = 0; i < 200000; ++i) {
    double x = rng.uniform();
    ASSERT_GT(x, 0.0);
    ASSERT_LT(x, 1.0);
    u.add(x);
    n.add(rng.normal());
  }
  EXPECT_NEAR(u.mean(), 0.5, 4 * u.std_error());
  EXPECT_NEAR(u.variance(), 1.0 / 12.0, 2e-3);
  EXPECT_NEAR(n.mean(), 0.0, 4 * n.std_error());
  EXPECT_NEAR(n.variance(), 1.0, 1e-2);
}

TEST(DriverAtoms, EmptyWhenMeasureHasNoMassAboveTruncation) {
  BranchingMechanism mech(0.0, 0.0, LevyMeasure::unit_atom(0.5));
  auto s = spec_with(3);
  s.eps.eps_m = 1.0;
  auto atoms = sample_atoms(s, mech, LevyMeasure::zero());
  EXPECT_TRUE(atoms.atoms(AtomKind::Branching).empty());
  EXPECT_TRUE(atoms.atoms(AtomKind::Immigration).empty());
}

TEST(DriverAtoms, DeterministicGivenSeed) {
  BranchingMechanism mech(1.0, 0.0, LevyMeasure::unit_atom(1.0));
  auto nu = LevyMeasure::exponential(2.0, 1.0);
  auto s = spec_with(99);
  s.bounds.excursion = 3.0;
  auto a = sample_atoms(s, mech, nu), b = sample_atoms(s, mech, nu);
  for (auto kind : {AtomKind::Branching, AtomKind::Immigration, AtomKind::Excursion})
    EXPECT_TRUE(same_atoms(a.atoms(kind), b.atoms(kind)));
  EXPECT_EQ(a.brownian(17), b.brownian(17));
  s.seed = 100;
  auto c = sample_atoms(s, mech, nu);
  EXPECT_FALSE(same_atoms(a.atoms(AtomKind::Immigration), c.atoms(AtomKind::Immigration)));
}

TEST(DriverAtoms, AtomsSortedInsideTheirBoxes) {
  BranchingMechanism mech(1.0, 0.0, LevyMeasure::atomic({{0.5, 1.0}, {2.0, 1.0}}));
  auto s = spec_with(5, 2.0);
  s.bounds.excursion = 2.0;
  auto atoms = sample_atoms(s, mech, LevyMeasure::stable(1.0, 0.5, 0.0, 10.0));
  for (auto kind : {AtomKind::Branching, AtomKind::Immigration, AtomKind::Excursion}) {
    const auto& v = atoms.atoms(kind);
    EXPECT_FALSE(v.empty()) << to_string(kind);
    for (std::size_t i = 0; i < v.size(); ++i) {
      EXPECT_GT(v[i].s, 0.0);
      EXPECT_LE(v[i].s, 2.0);
      EXPECT_GT(v[i].u, 0.0);
      EXPECT_LE(v[i].u, atoms.bound(kind));
      EXPECT_GE(v[i].z, atoms.truncation(kind));
      if (i) EXPECT_LE(v[i - 1].s, v[i].s);
      if (kind == AtomKind::Excursion) {
        EXPECT_GT(v[i].alpha, 0.0);
        EXPECT_LE(v[i].alpha, 2.0);
      }
    }
  }
}

TEST(DriverAtoms, PoissonCountOfImmigrationAtoms) {
  // nu = 2 delta_1, T = 1, U = 1: count ~ Poisson(2)
  auto nu = LevyMeasure::unit_atom(1.0, 2.0);
  RunningStats counts;
  for (std::uint64_t seed = 0; seed < 10000; ++seed) {
    auto s = spec_with(seed);
    s.bounds.immigration = 1.0;
    counts.add(static_cast<double>(sample_atoms(s, BranchingMechanism(), nu).atoms(AtomKind::Immigration).size()));
  }
  EXPECT_NEAR(counts.mean(), 2.0, 3 * std::sqrt(2.0 / 1e4));
  EXPECT_NEAR(counts.variance(), 2.0, 0.15);
}

TEST(DriverAtoms, ExcursionRequiresFiniteSlope) {
  auto s = spec_with(1);
  s.bounds.excursion = 1.0;
  EXPECT_THROW(sample_atoms(s, BranchingMechanism(1.0, 1.0), LevyMeasure::zero()), UnsupportedRegime);
  s.bounds.excursion = 0.0;
  EXPECT_NO_THROW(sample_atoms(s, BranchingMechanism(1.0, 1.0), LevyMeasure::zero()));
}

TEST(DriverAtoms, ExcursionDelayIsTruncatedExponential) {
  // delta = 2: mean of Exp(2) truncated to (0, 1]
  BranchingMechanism mech(1.0, 0.0, LevyMeasure::unit_atom(1.0));
  RunningStats alpha, count;
  for (std::uint64_t seed = 0; seed < 4000; ++seed) {
    auto s = spec_with(seed);
    s.bounds.excursion = 1.0;
    auto atoms = sample_atoms(s, mech, LevyMeasure::zero());
    count.add(static_cast<double>(atoms.atoms(AtomKind::Excursion).size()));
    for (const auto& a : atoms.atoms(AtomKind::Excursion)) alpha.add(a.alpha);
  }
  const double d = 2.0, T = 1.0;
  double mass = -std::expm1(-d * T) / d;
  double mean = 1.0 / d - T * std::exp(-d * T) / -std::expm1(-d * T);
  EXPECT_NEAR(count.mean(), mass, 4 * count.std_error());
  EXPECT_NEAR(alpha.mean(), mean, 4 * alpha.std_error());
}

TEST(ExtendLayer, IdentityAndScheduleIndependence) {
  BranchingMechanism mech(0.0, 0.5, LevyMeasure::exponential(1.0, 1.0));
  auto s = spec_with(11);
  s.bounds.branching = 1.5;
  auto base = sample_atoms(s, mech, LevyMeasure::zero());
  auto same = extend_layer(base, AtomKind::Branching, 1.5);
  EXPECT_TRUE(same_atoms(base.atoms(AtomKind::Branching), same.atoms(AtomKind::Branching)));

  auto once = extend_layer(base, AtomKind::Branching, 7.3);
  auto twice = extend_layer(extend_layer(base, AtomKind::Branching, 2.2), AtomKind::Branching, 7.3);
  EXPECT_TRUE(same_atoms(once.atoms(AtomKind::Branching), twice.atoms(AtomKind::Branching)));

  // old atoms survive unchanged; new ones lie above the old bound
  std::size_t old_found = 0;
  for (const auto& a : once.atoms(AtomKind::Branching)) {
    if (a.u <= 1.5) {
      ++old_found;
      bool match = false;
      for (const auto& b : base.atoms(AtomKind::Branching)) match |= (a.id == b.id && a.s == b.s && a.z == b.z);
      EXPECT_TRUE(match);
    }
  }
  EXPECT_EQ(old_found, base.atoms(AtomKind::Branching).size());
}

TEST(ExtendLayer, DoublingDoublesExpectedNewAtoms) {
  auto nu = LevyMeasure::unit_atom(1.0, 1.0);
  RunningStats first, second;
  for (std::uint64_t seed = 0; seed < 5000; ++seed) {
    auto s = spec_with(seed);
    s.bounds.immigration = 1.0;
    auto a = sample_atoms(s, BranchingMechanism(), nu);
    double n1 = static_cast<double>(a.atoms(AtomKind::Immigration).size());
    a.extend(AtomKind::Immigration, 2.0);
    double n2 = static_cast<double>(a.atoms(AtomKind::Immigration).size());
    a.extend(AtomKind::Immigration, 4.0);
    double n4 = static_cast<double>(a.atoms(AtomKind::Immigration).size());
    first.add(n2 - n1);
    second.add(n4 - n2);
  }
  EXPECT_NEAR(first.mean(), 1.0, 4 * first.std_error());
  EXPECT_NEAR(second.mean(), 2.0, 4 * second.std_error());
}

TEST(DriverAtoms, ThinningClosureAndUniformTimes) {
  auto nu = LevyMeasure::unit_atom(1.0, 3.0);
  RunningStats thinned;
  std::vector<double> times;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    auto s = spec_with(seed, 2.0);
    s.bounds.immigration = 1.0;
    auto a = sample_atoms(s, BranchingMechanism(), nu);
    double n = 0;
    for (const auto& atom : a.atoms(AtomKind::Immigration)) {
      if (atom.u <= 0.25) ++n;
      times.push_back(atom.s);
    }
    thinned.add(n);
  }
  EXPECT_NEAR(thinned.mean(), 0.25 * 3.0 * 2.0, 4 * thinned.std_error());
  EXPECT_GT(ks_pvalue(ks_uniform_statistic(times, 0.0, 2.0), times.size()), 0.01);
}

TEST(DriverAtoms, BrownianRandomAccessMatchesSums) {
  auto a = sample_atoms(spec_with(8), BranchingMechanism(0.0, 1.0), LevyMeasure::zero());
  for (std::size_t first : {0u, 3u, 10u})
    for (std::size_t count : {1u, 2u, 5u}) {
      double direct = 0.0;
      for (std::size_t i = first; i < first + count; ++i) direct += a.brownian(i);
      EXPECT_NEAR(a.brownian_sum(first, count), direct, 1e-14);
    }
  RunningStats st;
  for (std::size_t i = 0; i < 100000; ++i) st.add(a.brownian(i));
  EXPECT_NEAR(st.mean(), 0.0, 4 * st.std_error());
  EXPECT_NEAR(st.variance(), 1.0, 0.02);
}

TEST(DriverAtoms, CsvDump) {
  auto s = spec_with(2);
  s.bounds.immigration = 1.0;
  auto a = sample_atoms(s, BranchingMechanism(), LevyMeasure::unit_atom(1.0, 5.0));
  std::ostringstream os;
  write_atoms_csv(os, a);
  std::string text = os.str();
  EXPECT_EQ(text.rfind("kind,s,z_or_x,u,alpha\n", 0), 0u);
  std::size_t lines = static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
  EXPECT_EQ(lines, 1 + a.atoms(AtomKind::Immigration).size());
}

TEST(KsHelpers, DetectsNonUniformSample) {
  std::vector<double> xs;
  for (int i = 0; i < 1000; ++i) xs.push_back(std::pow((i + 0.5) / 1000.0, 2.0));
  EXPECT_LT(ks_pvalue(ks_uniform_statistic(xs, 0.0, 1.0), xs.size()), 1e-6);
  std::vector<double> grid;
  for (int i = 0; i < 1000; ++i) grid.push_back((i + 0.5) / 1000.0);
  EXPECT_GT(ks_pvalue(ks_uniform_statistic(grid, 0.0, 1.0), grid.size()), 0.99);
}
