#pragma once

#include <string>
#include <vector>

#include "cbdi/levy_measure.hpp"
#include "cbdi/rate_function.hpp"

namespace cbdi {

/// phi(lambda) = b lambda + c lambda^2 + int (e^{-z lambda} - 1 + z lambda) m(dz).
struct BranchingMechanism {
  double b = 0.0;
  double c = 0.0;
  LevyMeasure m;

  BranchingMechanism() = default;
  BranchingMechanism(double b_, double c_, LevyMeasure m_ = LevyMeasure::zero());

  double phi(double lambda) const;
  double phi_prime(double lambda) const;
  bool is_cir() const { return m.is_zero(); }
  std::string describe() const;
};

/// delta = phi'(inf), possibly infinite.
struct SlopeAtInfinity {
  double value;
  bool finite;
};

SlopeAtInfinity phi_prime_at_infinity(const BranchingMechanism& mech);

inline double phi_eval(const BranchingMechanism& mech, double lambda) { return mech.phi(lambda); }

/// psi(lambda) = beta lambda + int (1 - e^{-lambda z}) nu(dz).
struct ImmigrationMechanism {
  double beta0 = 0.0;
  LevyMeasure nu;

  ImmigrationMechanism() = default;
  ImmigrationMechanism(double beta, LevyMeasure nu_ = LevyMeasure::zero());

  double psi(double lambda) const;
};

inline double psi_eval(const ImmigrationMechanism& imm, double lambda) { return imm.psi(lambda); }

/// Increasing concave modulus r with int_{0+} du / r(u) = inf.
struct Modulus {
  enum class Kind { Linear, LogLipschitz };
  Kind kind = Kind::Linear;
  double constant = 0.0;

  static Modulus linear(double L) { return {Kind::Linear, L}; }
  /// r(u) = L u (1 + log+(1/u))
  static Modulus log_lipschitz(double L) { return {Kind::LogLipschitz, L}; }

  double operator()(double u) const;
};

/// State-dependent immigration rates beta(x) and q(x, z) = q_state(x) q_size(z).
struct DependentRates {
  RateFunction beta = RateFunction::constant(0.0);
  RateFunction q_state = RateFunction::constant(0.0);
  RateFunction q_size = RateFunction::constant(1.0);
  double growth_K = 0.0;
  Modulus modulus;
  std::string name = "custom";

  double q(double x, double z) const { return q_state(x) * q_size(z); }
  /// int q(x, z) z nu(dz)
  double q_moment(const LevyMeasure& nu, double x) const;
  /// int q_size(z) z nu(dz) over [a, b)
  double size_moment(const LevyMeasure& nu, double a = 0.0, double b = kInf) const;
  /// sup of q_size over the support of nu (on its audit points)
  double size_sup(const LevyMeasure& nu) const;

  bool is_zero() const;
  bool is_constant() const { return beta.is_constant() && q_state.is_constant(); }

  /// Rates with x replaced by min(x, level).
  DependentRates localized(double level) const;

  /// beta == 0, q == 0.
  static DependentRates none();
  /// beta(x) = beta, q == 1 (classical CBI).
  static DependentRates constant(double beta, const LevyMeasure& nu);
  /// beta(x) = beta x, q(x, z) = x; shifts the branching mechanism.
  static DependentRates shifted_branching(double beta, const LevyMeasure& nu);
  /// beta(x) = beta x - gamma min(x, x^2), q == 0; logistic-type competition.
  static DependentRates competition(double beta, double gamma);
};

struct ConditionReport {
  double growth_violation = 0.0;     // max over grid of [lhs - K(1+x)]^+ / (1 + K(1+x))
  double worst_growth_x = 0.0;
  double lipschitz_violation = 0.0;  // max over pairs of [lhs - r(|x-y|)]^+ / (1 + r)
  double worst_pair_x = 0.0;
  double worst_pair_y = 0.0;
  double tolerance = 1e-9;

  bool growth_ok() const { return growth_violation <= tolerance; }
  bool lipschitz_ok() const { return lipschitz_violation <= tolerance; }
  bool passed() const { return growth_ok() && lipschitz_ok(); }
};

/// 64 points: 0 followed by log-spaced points on [1e-3, 1e3].
std::vector<double> default_condition_grid();

ConditionReport check_conditions(const DependentRates& rates, const LevyMeasure& nu,
                                 const std::vector<double>& grid, double tolerance = 1e-9);

}  // namespace cbdi
