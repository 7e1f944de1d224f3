#include "cbdi/cumulant.hpp"

#include <algorithm>
#include <bit>
#include <boost/numeric/odeint.hpp>
#include <cmath>
#include <mutex>
#include <shared_mutex>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "cbdi/errors.hpp"

namespace cbdi {

namespace odeint = boost::numeric::odeint;

namespace {

double cir_closed_form(double b, double c, double t, double lambda) {
  // lambda e^{-bt} / (1 + c lambda (1 - e^{-bt}) / b); the ratio tends to t as b -> 0
  double k = (b == 0.0) ? t : -std::expm1(-b * t) / b;
  return lambda * std::exp(-b * t) / (1.0 + c * lambda * k);
}

double integrate_ode(const BranchingMechanism& mech, double t, double lambda, double tol) {
  using Stepper = odeint::runge_kutta_dopri5<double, double, double, double, odeint::vector_space_algebra>;
  auto rhs = [&mech](const double& v, double& dvdt, double) { dvdt = -mech.phi(std::max(v, 0.0)); };
  const double rel = std::max(1e-3 * tol, 1e-15);
  const double abs_tol = std::max(rel * std::min(1.0, lambda), 1e-300);
  double dt0 = std::min(t, 1e-3);
  for (int attempt = 0; attempt < 3; ++attempt) {
    double v = lambda;
    try {
      auto stepper = odeint::make_controlled(abs_tol, rel, Stepper());
      odeint::integrate_adaptive(stepper, rhs, v, 0.0, t, dt0);
      if (!std::isfinite(v)) throw NumericError("non-finite state");
      return std::max(v, 0.0);
    } catch (const std::exception&) {
      dt0 *= 1e-3;
    }
  }
  std::ostringstream os;
  os << "cumulant ODE failed for " << mech.describe() << " at t=" << t << " lambda=" << lambda;
  throw NumericError(os.str());
}

struct PairHash {
  std::size_t operator()(const std::pair<std::uint64_t, std::uint64_t>& k) const {
    return std::hash<std::uint64_t>()(k.first * 0x9E3779B97F4A7C15ull ^ k.second);
  }
};

double simpson_rec(const std::function<double(double)>& f, double a, double b, double fa, double fm,
                   double fb, double whole, double tol, int depth, bool& failed) {
  double m = 0.5 * (a + b);
  double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  double flm = f(lm), frm = f(rm);
  double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  double delta = left + right - whole;
  if (std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  if (depth <= 0) {
    failed = true;
    return left + right + delta / 15.0;
  }
  return simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, failed) +
         simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, failed);
}

}  // namespace

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol,
                        int max_depth) {
  if (!(b > a)) return 0.0;
  // Split once up front so that a symmetric integrand cannot fool the first test.
  double m = 0.5 * (a + b);
  double total = 0.0;
  bool failed = false;
  for (auto [lo, hi] : {std::pair{a, m}, std::pair{m, b}}) {
    double fa = f(lo), fb = f(hi), fm = f(0.5 * (lo + hi));
    double whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
    total += simpson_rec(f, lo, hi, fa, fm, fb, whole, 0.5 * tol, max_depth, failed);
  }
  if (failed || !std::isfinite(total)) {
    std::ostringstream os;
    os << "adaptive Simpson did not reach tolerance " << tol << " on [" << a << ", " << b << "]";
    throw NumericError(os.str());
  }
  return total;
}

double solve_v(const BranchingMechanism& mech, double t, double lambda, double tol,
               std::optional<CumulantMethod> method) {
  if (t < 0.0 || lambda < 0.0) throw std::invalid_argument("solve_v: t and lambda must be >= 0");
  if (!(tol > 0.0)) throw std::invalid_argument("solve_v: tol must be > 0");
  if (lambda == 0.0) return 0.0;
  if (t == 0.0) return lambda;
  CumulantMethod how = method.value_or(mech.is_cir() ? CumulantMethod::AnalyticCir : CumulantMethod::AdaptiveOde);
  if (how == CumulantMethod::AnalyticCir) {
    if (!mech.is_cir()) throw std::invalid_argument("solve_v: closed form requires m = 0");
    return cir_closed_form(mech.b, mech.c, t, lambda);
  }
  return integrate_ode(mech, t, lambda, tol);
}

double h_eval(const BranchingMechanism& mech, double t) {
  auto delta = phi_prime_at_infinity(mech);
  if (!delta.finite) return t == 0.0 ? 1.0 : 0.0;
  return std::exp(-delta.value * t);
}

struct CumulantSolution::Memo {
  mutable std::shared_mutex mu;
  std::unordered_map<std::pair<std::uint64_t, std::uint64_t>, double, PairHash> table;
};

CumulantSolution::CumulantSolution(BranchingMechanism mech, double tol, std::optional<CumulantMethod> method)
    : mech_(std::move(mech)), tol_(tol), memo_(std::make_shared<Memo>()) {
  if (!(tol_ > 0.0)) throw std::invalid_argument("CumulantSolution: tol must be > 0");
  method_ = method.value_or(mech_.is_cir() ? CumulantMethod::AnalyticCir : CumulantMethod::AdaptiveOde);
  if (method_ == CumulantMethod::AnalyticCir && !mech_.is_cir())
    throw std::invalid_argument("CumulantSolution: closed form requires m = 0");
}

double CumulantSolution::v(double t, double lambda) const {
  if (lambda == 0.0) return 0.0;
  if (t == 0.0) return lambda;
  if (method_ == CumulantMethod::AnalyticCir) return solve_v(mech_, t, lambda, tol_, method_);
  auto key = std::make_pair(std::bit_cast<std::uint64_t>(t), std::bit_cast<std::uint64_t>(lambda));
  {
    std::shared_lock lock(memo_->mu);
    auto it = memo_->table.find(key);
    if (it != memo_->table.end()) return it->second;
  }
  double value = solve_v(mech_, t, lambda, tol_, method_);
  std::unique_lock lock(memo_->mu);
  memo_->table.emplace(key, value);
  return value;
}

std::size_t CumulantSolution::memo_size() const {
  std::shared_lock lock(memo_->mu);
  return memo_->table.size();
}

double semigroup_check(const CumulantSolution& sol, double r, double t, double lambda) {
  return std::abs(sol.v(r + t, lambda) - sol.v(r, sol.v(t, lambda)));
}

double laplace_cb(const CumulantSolution& sol, double x, double t, double lambda) {
  if (x == 0.0 || lambda == 0.0) return 1.0;
  return std::exp(-x * sol.v(t, lambda));
}

double laplace_cbi(const CumulantSolution& sol, const ImmigrationMechanism& imm, double x, double t,
                   double lambda) {
  if (lambda == 0.0) return 1.0;
  double integral = 0.0;
  if (t > 0.0 && (imm.beta0 > 0.0 || !imm.nu.is_zero())) {
    double qtol = std::max(sol.tolerance() * t / 10.0, 1e-15);
    integral = adaptive_simpson([&](double s) { return imm.psi(sol.v(s, lambda)); }, 0.0, t, qtol);
  }
  return std::exp(-x * sol.v(t, lambda) - integral);
}

DeterministicRates DeterministicRates::constant(double beta) {
  DeterministicRates r;
  r.rho = [beta](double) { return beta; };
  r.g_time = [](double) { return 1.0; };
  return r;
}

DeterministicRates DeterministicRates::step(std::vector<double> knots, std::vector<double> values) {
  if (knots.empty() || knots.size() != values.size() || knots.front() != 0.0)
    throw std::invalid_argument("step rates: need knots starting at 0, one value per knot");
  for (std::size_t i = 1; i < knots.size(); ++i)
    if (!(knots[i] > knots[i - 1])) throw std::invalid_argument("step rates: knots must increase");
  for (double v : values)
    if (!(v >= 0.0)) throw std::invalid_argument("step rates: values must be >= 0");
  DeterministicRates r;
  r.breakpoints.assign(knots.begin() + 1, knots.end());
  r.rho = [knots, values](double s) {
    // left-continuous: value i on (knots[i], knots[i+1]], value 0 at s = 0
    auto it = std::lower_bound(knots.begin(), knots.end(), s);
    std::size_t idx = (it == knots.begin()) ? 0 : static_cast<std::size_t>(it - knots.begin()) - 1;
    return values[idx];
  };
  r.g_time = [](double) { return 0.0; };
  return r;
}

double laplace_inhomogeneous(const CumulantSolution& sol, const LevyMeasure& nu,
                             const DeterministicRates& rates, double r, double t, double x,
                             double lambda) {
  if (r < 0.0 || t < r) throw std::invalid_argument("laplace_inhomogeneous: need 0 <= r <= t");
  if (lambda == 0.0) return 1.0;
  auto integrand = [&](double s) {
    double v = sol.v(t - s, lambda);
    double out = v * rates.rho(s);
    double gt = rates.g_time(s);
    if (gt != 0.0 && !nu.is_zero()) {
      double inner = rates.g_size.is_constant()
                         ? rates.g_size(0.0) * nu.immigration_integral(v)
                         : nu.integrate([&](double z) { return -std::expm1(-z * v) * rates.g_size(z); });
      out += gt * inner;
    }
    return out;
  };
  std::vector<double> cuts{r};
  for (double bp : rates.breakpoints)
    if (bp > r && bp < t) cuts.push_back(bp);
  cuts.push_back(t);
  double integral = 0.0;
  double qtol = std::max(sol.tolerance() * (t - r) / 10.0, 1e-15);
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    double a = cuts[i], b = cuts[i + 1];
    double w = (b - a) / std::max(t - r, 1e-300);
    // rates are left-continuous, so the left end of a piece takes the value from inside it
    auto piece = [&](double s) { return integrand(s == a && i > 0 ? std::nextafter(a, b) : s); };
    integral += adaptive_simpson(piece, a, b, qtol * w);
  }
  return std::exp(-x * sol.v(t - r, lambda) - integral);
}

double mean_first_moment(const BranchingMechanism& mech, double x, double t) {
  return x * std::exp(-mech.b * t);
}

double first_moment_slope(const CumulantSolution& sol, double t, double step) {
  double d1 = sol.v(t, step) / step;
  double d2 = sol.v(t, 2.0 * step) / (2.0 * step);
  return 2.0 * d1 - d2;
}

double largest_root(const BranchingMechanism& mech) {
  if (mech.phi_prime(0.0) >= 0.0) return 0.0;
  double hi = 1.0;
  int guard = 0;
  while (mech.phi(hi) <= 0.0) {
    hi *= 2.0;
    if (++guard > 200) return kInf;
  }
  double lo = 0.0;
  // phi < 0 just right of 0 and phi(hi) > 0: bisect for the sign change
  for (int i = 0; i < 200 && hi - lo > 1e-14 * hi; ++i) {
    double mid = 0.5 * (lo + hi);
    if (mid > 0.0 && mech.phi(mid) > 0.0)
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

}  // namespace cbdi
