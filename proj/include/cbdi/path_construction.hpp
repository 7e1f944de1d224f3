#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "cbdi/cumulant.hpp"
#include "cbdi/drivers.hpp"
#include "cbdi/mechanisms.hpp"
#include "cbdi/sde_engine.hpp"

namespace cbdi {

struct ConstructionParams {
  double T = 1.0;
  double dt = 1e-3;
  double x0 = 1.0;
  std::uint64_t seed = 1;
  std::uint64_t path_id = 0;
  LayerBounds bounds{4.0, 4.0, 4.0};
  Truncations eps;
  bool mean_corrections = true;  // add the mean of the discarded small masses
};

/// Y = X + continuous_drift + excursion_sum + immigrant_sum on the grid.
struct FieldDecomposition {
  double dt = 0.0;
  std::vector<double> X, drift, excursion_sum, immigrant_sum, Y;
  /// e^{|b|T} T [sup rho M1^m(0,eps0)/delta + sup g_time int_{(0,eps_nu)} g_size z nu]
  double truncation_bias_bound = 0.0;

  std::size_t size() const { return Y.size(); }
  double time(std::size_t i) const { return dt * static_cast<double>(i); }
};

/// A trajectory grown from one excursion or immigrant atom.  It starts at
/// birth = s (+ alpha for excursions) with mass z and is absorbed at 0.
struct ImmigrantPath {
  AtomKind kind = AtomKind::Immigration;
  double birth = 0.0;
  double initial_mass = 0.0;
  double alpha = 0.0;
  SamplePath trajectory;
};

/// Frozen noise for one replicate: the base CB path X, the atoms and a lazily
/// filled pool of child trajectories.  Everything evaluated against the same
/// state sees the same realisation, which is what the Picard iteration and
/// the comparison coupling rely on.  Not thread-safe; use one per replicate.
class ConstructionState {
 public:
  ConstructionState(BranchingMechanism mech, LevyMeasure nu, const ConstructionParams& params);

  const BranchingMechanism& mechanism() const { return mech_; }
  const LevyMeasure& immigration_measure() const { return nu_; }
  const CumulantSolution& cumulant() const { return sol_; }
  const ConstructionParams& params() const { return params_; }
  const SamplePath& base() const { return base_; }
  DriverAtoms& atoms() { return atoms_; }
  const DriverAtoms& atoms() const { return atoms_; }
  std::size_t steps() const { return base_.steps(); }
  bool excursions_supported() const { return delta_finite_; }
  double delta() const { return delta_; }

  /// Add a hand-placed atom; it is summed after the sampled ones.
  void inject(AtomKind kind, PoissonAtom atom);
  /// Ignore every sampled atom of `kind` for which pred holds.
  void drop(AtomKind kind, const std::function<bool(const PoissonAtom&)>& pred);

  /// Sampled (minus dropped) then injected atoms, in summation order.
  std::vector<PoissonAtom> active_atoms(AtomKind kind) const;

  /// Child trajectory of an atom, simulated on first use and cached.
  const ImmigrantPath& child(AtomKind kind, const PoissonAtom& atom);
  std::size_t pool_size() const { return pool_.size(); }

 private:
  BranchingMechanism mech_;
  LevyMeasure nu_;
  CumulantSolution sol_;
  ConstructionParams params_;
  DriverAtoms atoms_;
  SamplePath base_;
  double delta_ = 0.0;
  bool delta_finite_ = false;
  std::map<std::pair<AtomKind, std::uint64_t>, ImmigrantPath> pool_;
  std::map<AtomKind, std::vector<PoissonAtom>> injected_;
  std::map<AtomKind, std::unordered_set<std::uint64_t>> dropped_;
  std::uint64_t injected_count_ = 0;
};

/// Y on the whole grid for given immigration rates rho(s), g(s, z).  Raises
/// the excursion / immigration layers as far as the rates require.  Throws
/// UnsupportedRegime when delta = inf and rho is not identically 0 on the grid.
FieldDecomposition evaluate_field(ConstructionState& state, const DeterministicRates& rates);

/// Y_t alone.
double evaluate_field(ConstructionState& state, const DeterministicRates& rates, double t);

struct PicardParams {
  int max_iter = 50;
  double tol = 1e-8;           // relative: stop when sup|Y_k - Y_{k-1}| <= tol (1 + sup|Y_k|)
  double level0 = 16.0;        // first localization level
  double max_level = 1 << 20;  // doubling past this throws LocalizationError
};

struct PicardReport {
  FieldDecomposition field;
  std::vector<double> sup_diffs;  // sup_grid |Y_k - Y_{k-1}|, k = 1, 2, ...
  int iterations = 0;
  bool converged = false;
  double level = 0.0;

  /// Y as a path on the grid.
  SamplePath path() const;
  /// Largest ratio sup_diffs[k+1] / sup_diffs[k] for k >= skip (0 when trivially converged).
  double worst_ratio(std::size_t skip = 1) const;
};

/// Rates of the next iterate read from the previous one: rho(s) = beta(Y(s-) ^ level),
/// g(s, z) = q(Y(s-) ^ level, z), where Y(s-) is the value at the previous grid point.
DeterministicRates rates_from_iterate(const DependentRates& rates, const std::vector<double>& prev, double dt,
                                      double level);

/// Picard iteration Y_0 = initial (X when empty), Y_k = field(rates read from Y_{k-1}).
PicardReport picard_solve(ConstructionState& state, const DependentRates& rates, const PicardParams& params = {},
                          const std::vector<double>& initial = {});

struct ComparisonReport {
  double max_gap = 0.0;  // max over the grid of (Y - Y')^+
  std::size_t violations = 0;  // grid points with Y > Y' + tol
  int iterations = 0;
  bool converged = false;
  PicardReport lower, upper;
};

/// Refuses (HypothesisViolation) unless beta <= beta', q <= q' on the audit
/// grid and beta or beta', q or q' is increasing in x.
void audit_comparison(const DependentRates& rates, const DependentRates& rates_prime, const LevyMeasure& nu,
                      double level);

/// Both Picard iterations on the same state, step by step with a common
/// localization level, so that Y_k <= Y'_k holds at every stage.
ComparisonReport coupled_compare(ConstructionState& state, const DependentRates& rates,
                                 const DependentRates& rates_prime, const PicardParams& params = {});

struct UniquenessReport {
  double sup_gap = 0.0;  // Picard from X vs from X + shift
  PicardReport from_base, from_shifted;
  bool passed(double tol) const { return from_base.converged && from_shifted.converged && sup_gap <= tol; }
};

UniquenessReport pathwise_uniqueness_check(ConstructionState& state, const DependentRates& rates, double shift = 1.0,
                                           PicardParams params = {});

struct KuznetsovReport {
  double t = 0.0, lambda = 0.0;
  double analytic = 0.0;      // v_t(lambda) - h_t lambda
  double remainder_bound = 0.0;  // mass of excursions started below eps0 that could matter
  McEstimate estimate;
  bool passed = false;
};

/// MC of int (1 - e^{-lambda w(t)}) N0(dw) from excursion atoms on a unit
/// (s, u) box, against v_t(lambda) - h_t lambda.
KuznetsovReport kuznetsov_marginal_check(const BranchingMechanism& mech, double t, double lambda,
                                         std::size_t replicates, std::uint64_t seed = 1, double dt = 1e-3,
                                         double eps0 = 1e-3);

/// Columns t,X,continuous_drift_term,excursion_sum,immigrant_sum,Y after a
/// `# cbdi-decomposition v1` tag line.
void write_decomposition_csv(std::ostream& os, const FieldDecomposition& field);

}  // namespace cbdi
