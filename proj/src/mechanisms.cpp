#include "cbdi/mechanisms.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <variant>

namespace cbdi {

namespace {

// int z (1 - e^{-z lambda}) m(dz)
double branching_slope_integral(const LevyMeasure& m, double lambda) {
  if (m.is_zero()) return 0.0;
  const auto& rep = m.representation();
  if (const auto* a = std::get_if<AtomicMeasure>(&rep)) {
    double sum = 0.0;
    for (const auto& atom : a->atoms) sum += -atom.weight * atom.z * std::expm1(-atom.z * lambda);
    return sum;
  }
  if (const auto* e = std::get_if<ExponentialDensity>(&rep)) {
    double r = e->rate;
    return e->mass * lambda * (lambda + 2.0 * r) / (r * (r + lambda) * (r + lambda));
  }
  const auto& s = std::get<StableKernel>(rep);
  if (s.lower == 0.0 && std::isinf(s.upper) && s.alpha > 1.0)
    return s.scale * std::tgamma(-s.alpha) * s.alpha * std::pow(lambda, s.alpha - 1.0);
  return m.integrate([lambda](double z) { return -z * std::expm1(-z * lambda); });
}

}  // namespace

BranchingMechanism::BranchingMechanism(double b_, double c_, LevyMeasure m_)
    : b(b_), c(c_), m(std::move(m_)) {
  if (!(c >= 0.0)) throw std::invalid_argument("BranchingMechanism: c must be >= 0");
  double small = m.partial_moment(2, 0.0, 1.0);
  double large = m.partial_moment(1, 1.0, kInf);
  if (!std::isfinite(small) || !std::isfinite(large))
    throw std::invalid_argument("BranchingMechanism: int (z ^ z^2) m(dz) must be finite");
}

double BranchingMechanism::phi(double lambda) const {
  if (lambda == 0.0) return 0.0;
  return b * lambda + c * lambda * lambda + m.branching_integral(lambda);
}

double BranchingMechanism::phi_prime(double lambda) const {
  return b + 2.0 * c * lambda + branching_slope_integral(m, lambda);
}

std::string BranchingMechanism::describe() const {
  std::ostringstream os;
  os << "b=" << b << " c=" << c << " m=" << m.describe();
  return os.str();
}

SlopeAtInfinity phi_prime_at_infinity(const BranchingMechanism& mech) {
  if (mech.c > 0.0) return {kInf, false};
  double first = mech.m.partial_moment(1, 0.0, kInf);
  if (!std::isfinite(first)) return {kInf, false};
  return {mech.b + first, true};
}

ImmigrationMechanism::ImmigrationMechanism(double beta, LevyMeasure nu_) : beta0(beta), nu(std::move(nu_)) {
  if (!(beta0 >= 0.0)) throw std::invalid_argument("ImmigrationMechanism: beta must be >= 0");
  double small = nu.partial_moment(1, 0.0, 1.0);
  double large = nu.partial_moment(0, 1.0, kInf);
  if (!std::isfinite(small) || !std::isfinite(large))
    throw std::invalid_argument("ImmigrationMechanism: int (1 ^ z) nu(dz) must be finite");
}

double ImmigrationMechanism::psi(double lambda) const {
  if (lambda == 0.0) return 0.0;
  return beta0 * lambda + nu.immigration_integral(lambda);
}

double Modulus::operator()(double u) const {
  if (u <= 0.0) return 0.0;
  switch (kind) {
    case Kind::Linear: return constant * u;
    case Kind::LogLipschitz: return constant * u * (1.0 + std::max(0.0, -std::log(u)));
  }
  return 0.0;
}

double DependentRates::size_moment(const LevyMeasure& nu, double a, double b) const {
  if (nu.is_zero()) return 0.0;
  if (q_size.is_constant()) return q_size(0.0) * nu.partial_moment(1, a, b);
  return nu.integrate([this](double z) { return q_size(z) * z; }, a, b);
}

double DependentRates::q_moment(const LevyMeasure& nu, double x) const {
  double s = q_state(x);
  if (s == 0.0) return 0.0;
  return s * size_moment(nu);
}

double DependentRates::size_sup(const LevyMeasure& nu) const {
  if (q_size.is_constant()) return q_size(0.0);
  double sup = 0.0;
  for (double z : nu.audit_points(256)) sup = std::max(sup, q_size(z));
  return sup;
}

bool DependentRates::is_zero() const {
  return beta.is_constant() && beta(0.0) == 0.0 && q_state.is_constant() && q_state(0.0) == 0.0;
}

DependentRates DependentRates::localized(double level) const {
  DependentRates out = *this;
  out.beta = beta.truncated(level);
  out.q_state = q_state.truncated(level);
  return out;
}

DependentRates DependentRates::none() {
  DependentRates r;
  r.name = "none";
  return r;
}

DependentRates DependentRates::constant(double beta, const LevyMeasure& nu) {
  if (!(beta >= 0.0)) throw std::invalid_argument("constant rates: beta must be >= 0");
  DependentRates r;
  r.beta = RateFunction::constant(beta);
  r.q_state = RateFunction::constant(1.0);
  r.q_size = RateFunction::constant(1.0);
  r.growth_K = beta + nu.partial_moment(1, 0.0);
  r.modulus = Modulus::linear(0.0);
  r.name = "constant";
  return r;
}

DependentRates DependentRates::shifted_branching(double beta, const LevyMeasure& nu) {
  if (!(beta >= 0.0)) throw std::invalid_argument("shifted_branching: beta must be >= 0");
  DependentRates r;
  double first = nu.partial_moment(1, 0.0);
  r.beta = RateFunction::identity().affine(beta);
  r.q_state = RateFunction::identity();
  r.q_size = RateFunction::constant(1.0);
  r.growth_K = beta + first;
  r.modulus = Modulus::linear(beta + first);
  r.name = "shifted_branching";
  return r;
}

DependentRates DependentRates::competition(double beta, double gamma) {
  if (!(beta > 0.0) || !(gamma >= 0.0) || gamma > beta)
    throw std::invalid_argument("competition: need beta > 0 and 0 <= gamma <= beta");
  DependentRates r;
  auto g = RateFunction::min(RateFunction::identity(), RateFunction::square()).affine(-gamma);
  r.beta = RateFunction::sum(RateFunction::identity().affine(beta), g);
  r.q_state = RateFunction::constant(0.0);
  r.q_size = RateFunction::constant(0.0);
  r.growth_K = beta;
  r.modulus = Modulus::linear(beta + 2.0 * gamma);
  r.name = "competition";
  return r;
}

std::vector<double> default_condition_grid() {
  std::vector<double> grid{0.0};
  const int n = 63;
  for (int i = 0; i < n; ++i) grid.push_back(1e-3 * std::pow(1e6, static_cast<double>(i) / (n - 1)));
  return grid;
}

ConditionReport check_conditions(const DependentRates& rates, const LevyMeasure& nu,
                                 const std::vector<double>& grid, double tolerance) {
  if (grid.empty()) throw std::invalid_argument("check_conditions: grid must be non-empty");
  ConditionReport rep;
  rep.tolerance = tolerance;
  const double size_mom = rates.size_moment(nu);

  for (double x : grid) {
    double lhs = rates.beta(x) + rates.q_state(x) * size_mom;
    double rhs = rates.growth_K * (1.0 + x);
    double v = std::max(0.0, lhs - rhs) / (1.0 + std::abs(rhs));
    if (v > rep.growth_violation) {
      rep.growth_violation = v;
      rep.worst_growth_x = x;
    }
  }
  for (std::size_t i = 0; i < grid.size(); ++i) {
    for (std::size_t j = i + 1; j < grid.size(); ++j) {
      double x = grid[i], y = grid[j];
      double lhs = std::abs(rates.beta(x) - rates.beta(y)) +
                   std::abs(rates.q_state(x) - rates.q_state(y)) * size_mom;
      double rhs = rates.modulus(std::abs(x - y));
      double v = std::max(0.0, lhs - rhs) / (1.0 + std::abs(rhs));
      if (v > rep.lipschitz_violation) {
        rep.lipschitz_violation = v;
        rep.worst_pair_x = x;
        rep.worst_pair_y = y;
      }
    }
  }
  return rep;
}

}  // namespace cbdi
