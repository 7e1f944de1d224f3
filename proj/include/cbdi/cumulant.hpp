#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "cbdi/mechanisms.hpp"

namespace cbdi {

enum class CumulantMethod { AnalyticCir, AdaptiveOde };

/// v_t(lambda) for a single (t, lambda): closed form when m = 0, adaptive
/// Dormand-Prince integration of dv/dt = -phi(v) otherwise.
double solve_v(const BranchingMechanism& mech, double t, double lambda, double tol = 1e-10,
               std::optional<CumulantMethod> method = std::nullopt);

/// h_t = e^{-delta t} when delta = phi'(inf) < inf, else 0 for t > 0.
double h_eval(const BranchingMechanism& mech, double t);

/// Evaluable cumulant semigroup with a memo table keyed on (t, lambda).
/// Copies share the memo; concurrent reads are safe.
class CumulantSolution {
 public:
  explicit CumulantSolution(BranchingMechanism mech, double tol = 1e-10,
                            std::optional<CumulantMethod> method = std::nullopt);

  double v(double t, double lambda) const;
  double h(double t) const { return h_eval(mech_, t); }

  const BranchingMechanism& mechanism() const { return mech_; }
  CumulantMethod method() const { return method_; }
  double tolerance() const { return tol_; }
  std::size_t memo_size() const;

 private:
  struct Memo;
  BranchingMechanism mech_;
  double tol_;
  CumulantMethod method_;
  std::shared_ptr<Memo> memo_;
};

/// |v_{r+t}(lambda) - v_r(v_t(lambda))|
double semigroup_check(const CumulantSolution& sol, double r, double t, double lambda);

/// e^{-x v_t(lambda)}
double laplace_cb(const CumulantSolution& sol, double x, double t, double lambda);

/// exp{-x v_t(lambda) - int_0^t psi(v_s(lambda)) ds}
double laplace_cbi(const CumulantSolution& sol, const ImmigrationMechanism& imm, double x, double t,
                   double lambda);

/// Deterministic immigration rates rho(s) and g(s, z) = g_time(s) g_size(z).
/// Breakpoints mark discontinuities of rho / g_time and are honoured by the
/// quadrature.
struct DeterministicRates {
  std::function<double(double)> rho = [](double) { return 0.0; };
  std::function<double(double)> g_time = [](double) { return 0.0; };
  RateFunction g_size = RateFunction::constant(1.0);
  std::vector<double> breakpoints;

  double g(double s, double z) const { return g_time(s) * g_size(z); }

  static DeterministicRates constant(double beta);
  /// rho = values[i] on (knots[i], knots[i+1]], last value beyond; g == 0.
  static DeterministicRates step(std::vector<double> knots, std::vector<double> values);
};

/// exp{-x v_{t-r} - int_r^t v_{t-s} rho(s) ds - int_r^t int (1 - e^{-z v_{t-s}}) g(s,z) nu(dz) ds}
double laplace_inhomogeneous(const CumulantSolution& sol, const LevyMeasure& nu,
                             const DeterministicRates& rates, double r, double t, double x,
                             double lambda);

/// x e^{-bt}
double mean_first_moment(const BranchingMechanism& mech, double x, double t);

/// d v_t / d lambda at 0+ by a second-order one-sided difference; equals
/// h_t + int y l_t(dy) = e^{-bt}.
double first_moment_slope(const CumulantSolution& sol, double t, double step = 1e-6);

/// Largest root of phi on [0, inf) (0 when phi > 0 on (0, inf)).
double largest_root(const BranchingMechanism& mech);

/// Adaptive Simpson quadrature of f on [a, b] to absolute tolerance tol.
double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol,
                        int max_depth = 40);

}  // namespace cbdi
