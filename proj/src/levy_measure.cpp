#include "cbdi/levy_measure.hpp"

#include <algorithm>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <cmath>
#include <sstream>

#include "cbdi/errors.hpp"

namespace cbdi {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

constexpr double kQuadTol = 1e-11;

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument("LevyMeasure: " + msg);
}

double checked(double value, double err, double l1, const char* where) {
  if (!std::isfinite(value) || err > 1e-6 * std::max(l1, 1e-300) + 1e-300) {
    std::ostringstream os;
    os << "quadrature did not converge in " << where << ": value=" << value
       << " error_estimate=" << err << " L1=" << l1;
    throw NumericError(os.str());
  }
  return value;
}

// int_a^b g(z) dz with a >= 0, b <= inf, g possibly singular at a.
double integrate_interval(const std::function<double(double)>& g, double a, double b) {
  if (!(b > a)) return 0.0;
  auto safe = [&](double z) {
    double v = g(z);
    return std::isfinite(v) ? v : 0.0;
  };
  double err = 0.0, l1 = 0.0;
  if (std::isinf(b)) {
    if (a <= 0.0) {
      return integrate_interval(g, 0.0, 1.0) + integrate_interval(g, 1.0, kInf);
    }
    boost::math::quadrature::exp_sinh<double> q;
    double v = q.integrate(safe, a, b, kQuadTol, &err, &l1);
    return checked(v, err, l1, "exp_sinh");
  }
  boost::math::quadrature::tanh_sinh<double> q;
  double v = q.integrate(safe, a, b, kQuadTol, &err, &l1);
  return checked(v, err, l1, "tanh_sinh");
}

double power_moment(double scale, double exponent, double lo, double hi) {
  // scale * int_lo^hi z^{exponent - 1} dz
  if (!(hi > lo)) return 0.0;
  if (exponent == 0.0) {
    if (lo <= 0.0 || std::isinf(hi)) return kInf;
    return scale * (std::log(hi) - std::log(lo));
  }
  if (exponent < 0.0 && lo <= 0.0) return kInf;
  if (exponent > 0.0 && std::isinf(hi)) return kInf;
  double hi_term = std::isinf(hi) ? 0.0 : std::pow(hi, exponent);
  double lo_term = lo <= 0.0 ? 0.0 : std::pow(lo, exponent);
  return scale * (hi_term - lo_term) / exponent;
}

double exp_moment_antiderivative(int p, double rate, double x) {
  // int_x^inf z^p rate e^{-rate z} dz
  if (std::isinf(x)) return 0.0;
  double e = std::exp(-rate * x);
  switch (p) {
    case 0: return e;
    case 1: return (x + 1.0 / rate) * e;
    case 2: return (x * x + 2.0 * x / rate + 2.0 / (rate * rate)) * e;
    default: throw std::invalid_argument("partial_moment: p must be 0, 1 or 2");
  }
}

}  // namespace

double expm1_plus_x(double x) {
  if (std::abs(x) < 1e-4) {
    double x2 = x * x;
    return x2 * (0.5 - x / 6.0 + x2 / 24.0);
  }
  return std::expm1(-x) + x;
}

LevyMeasure::LevyMeasure(Representation rep) : rep_(std::move(rep)) {
  std::visit(overloaded{
                 [](const AtomicMeasure& a) {
                   for (const auto& atom : a.atoms) {
                     require(atom.z > 0.0 && std::isfinite(atom.z), "atom location must be in (0, inf)");
                     require(atom.weight >= 0.0 && std::isfinite(atom.weight),
                             "atom weight must be nonnegative");
                   }
                 },
                 [](const ExponentialDensity& e) {
                   require(e.mass >= 0.0, "exponential mass must be nonnegative");
                   require(e.rate > 0.0, "exponential rate must be positive");
                 },
                 [](const StableKernel& s) {
                   require(s.scale >= 0.0, "stable scale must be nonnegative");
                   require(s.alpha > 0.0 && s.alpha < 2.0, "stable alpha must be in (0, 2)");
                   require(s.lower >= 0.0 && s.upper > s.lower, "stable support must satisfy 0 <= lower < upper");
                 },
             },
             rep_);
}

LevyMeasure LevyMeasure::atomic(std::vector<Atom> atoms) {
  std::sort(atoms.begin(), atoms.end(), [](const Atom& a, const Atom& b) { return a.z < b.z; });
  return LevyMeasure(AtomicMeasure{std::move(atoms)});
}

LevyMeasure LevyMeasure::exponential(double mass, double rate) {
  return LevyMeasure(ExponentialDensity{mass, rate});
}

LevyMeasure LevyMeasure::stable(double scale, double alpha, double lower, double upper) {
  return LevyMeasure(StableKernel{scale, alpha, lower, upper});
}

bool LevyMeasure::is_zero() const {
  return std::visit(overloaded{
                        [](const AtomicMeasure& a) {
                          return std::all_of(a.atoms.begin(), a.atoms.end(),
                                             [](const Atom& x) { return x.weight == 0.0; });
                        },
                        [](const ExponentialDensity& e) { return e.mass == 0.0; },
                        [](const StableKernel& s) { return s.scale == 0.0; },
                    },
                    rep_);
}

std::string LevyMeasure::describe() const {
  std::ostringstream os;
  std::visit(overloaded{
                 [&](const AtomicMeasure& a) {
                   os << "atomic{";
                   for (std::size_t i = 0; i < a.atoms.size(); ++i)
                     os << (i ? "," : "") << a.atoms[i].weight << "@" << a.atoms[i].z;
                   os << "}";
                 },
                 [&](const ExponentialDensity& e) { os << "exponential{mass=" << e.mass << ",rate=" << e.rate << "}"; },
                 [&](const StableKernel& s) {
                   os << "stable{scale=" << s.scale << ",alpha=" << s.alpha << ",lower=" << s.lower
                      << ",upper=" << s.upper << "}";
                 },
             },
             rep_);
  return os.str();
}

double LevyMeasure::tail_mass(double eps) const {
  return partial_moment(0, eps, kInf);
}

double LevyMeasure::partial_moment(int p, double a, double b) const {
  if (p < 0 || p > 2) throw std::invalid_argument("partial_moment: p must be 0, 1 or 2");
  if (!(b > a)) return 0.0;
  return std::visit(
      overloaded{
          [&](const AtomicMeasure& m) {
            double sum = 0.0;
            for (const auto& atom : m.atoms)
              if (atom.z >= a && atom.z < b) sum += atom.weight * std::pow(atom.z, p);
            return sum;
          },
          [&](const ExponentialDensity& e) {
            double lo = std::max(a, 0.0);
            return e.mass * (exp_moment_antiderivative(p, e.rate, lo) -
                             exp_moment_antiderivative(p, e.rate, b));
          },
          [&](const StableKernel& s) {
            double lo = std::max(a, s.lower);
            double hi = std::min(b, s.upper);
            return power_moment(s.scale, p - s.alpha, lo, hi);
          },
      },
      rep_);
}

double LevyMeasure::integrate(const std::function<double(double)>& f, double a, double b) const {
  if (!(b > a)) return 0.0;
  return std::visit(overloaded{
                        [&](const AtomicMeasure& m) {
                          double sum = 0.0;
                          for (const auto& atom : m.atoms)
                            if (atom.z >= a && atom.z < b) sum += atom.weight * f(atom.z);
                          return sum;
                        },
                        [&](const ExponentialDensity& e) {
                          if (e.mass == 0.0) return 0.0;
                          auto g = [&](double z) { return f(z) * e.mass * e.rate * std::exp(-e.rate * z); };
                          return integrate_interval(g, std::max(a, 0.0), b);
                        },
                        [&](const StableKernel& s) {
                          if (s.scale == 0.0) return 0.0;
                          auto g = [&](double z) {
                            double fz = f(z);
                            if (fz == 0.0) return 0.0;
                            return fz * s.scale * std::pow(z, -1.0 - s.alpha);
                          };
                          return integrate_interval(g, std::max(a, s.lower), std::min(b, s.upper));
                        },
                    },
                    rep_);
}

double LevyMeasure::sample_above(double eps, double u) const {
  return std::visit(
      overloaded{
          [&](const AtomicMeasure& m) {
            double total = 0.0;
            for (const auto& atom : m.atoms)
              if (atom.z >= eps) total += atom.weight;
            if (total <= 0.0) throw std::logic_error("sample_above: no mass above truncation");
            double target = u * total, cum = 0.0;
            double last = 0.0;
            for (const auto& atom : m.atoms) {
              if (atom.z < eps || atom.weight == 0.0) continue;
              cum += atom.weight;
              last = atom.z;
              if (target <= cum) return atom.z;
            }
            return last;
          },
          [&](const ExponentialDensity& e) { return std::max(eps, 0.0) - std::log1p(-u) / e.rate; },
          [&](const StableKernel& s) {
            double lo = std::max(eps, s.lower);
            if (lo <= 0.0) throw std::logic_error("sample_above: stable kernel needs a positive truncation");
            double lo_term = std::pow(lo, -s.alpha);
            double hi_term = std::isinf(s.upper) ? 0.0 : std::pow(s.upper, -s.alpha);
            return std::pow(lo_term - u * (lo_term - hi_term), -1.0 / s.alpha);
          },
      },
      rep_);
}

double LevyMeasure::support_upper() const {
  return std::visit(overloaded{
                        [](const AtomicMeasure& m) {
                          double hi = 0.0;
                          for (const auto& atom : m.atoms)
                            if (atom.weight > 0.0) hi = std::max(hi, atom.z);
                          return hi;
                        },
                        [](const ExponentialDensity&) { return kInf; },
                        [](const StableKernel& s) { return s.upper; },
                    },
                    rep_);
}

double LevyMeasure::support_lower() const {
  return std::visit(overloaded{
                        [](const AtomicMeasure& m) {
                          double lo = kInf;
                          for (const auto& atom : m.atoms)
                            if (atom.weight > 0.0) lo = std::min(lo, atom.z);
                          return lo;
                        },
                        [](const ExponentialDensity&) { return 0.0; },
                        [](const StableKernel& s) { return s.lower; },
                    },
                    rep_);
}

double LevyMeasure::branching_integral(double lambda) const {
  if (lambda == 0.0) return 0.0;
  return std::visit(overloaded{
                        [&](const AtomicMeasure& m) {
                          double sum = 0.0;
                          for (const auto& atom : m.atoms) sum += atom.weight * expm1_plus_x(lambda * atom.z);
                          return sum;
                        },
                        [&](const ExponentialDensity& e) {
                          return e.mass * lambda * lambda / (e.rate * (e.rate + lambda));
                        },
                        [&](const StableKernel& s) {
                          if (s.lower == 0.0 && std::isinf(s.upper) && s.alpha > 1.0)
                            return s.scale * std::tgamma(-s.alpha) * std::pow(lambda, s.alpha);
                          return integrate([&](double z) { return expm1_plus_x(lambda * z); });
                        },
                    },
                    rep_);
}

double LevyMeasure::immigration_integral(double lambda) const {
  if (lambda == 0.0) return 0.0;
  return std::visit(overloaded{
                        [&](const AtomicMeasure& m) {
                          double sum = 0.0;
                          for (const auto& atom : m.atoms) sum += -atom.weight * std::expm1(-lambda * atom.z);
                          return sum;
                        },
                        [&](const ExponentialDensity& e) { return e.mass * lambda / (e.rate + lambda); },
                        [&](const StableKernel& s) {
                          if (s.lower == 0.0 && std::isinf(s.upper) && s.alpha < 1.0)
                            return s.scale * std::tgamma(1.0 - s.alpha) / s.alpha * std::pow(lambda, s.alpha);
                          return integrate([&](double z) { return -std::expm1(-lambda * z); });
                        },
                    },
                    rep_);
}

std::vector<double> LevyMeasure::audit_points(std::size_t count) const {
  if (const auto* a = std::get_if<AtomicMeasure>(&rep_)) {
    std::vector<double> zs;
    for (const auto& atom : a->atoms)
      if (atom.weight > 0.0) zs.push_back(atom.z);
    return zs;
  }
  double lo = std::max(support_lower(), 1e-6);
  double hi = std::min(support_upper(), 1e3);
  std::vector<double> zs;
  if (count < 2) count = 2;
  for (std::size_t i = 0; i < count; ++i) {
    double frac = static_cast<double>(i) / static_cast<double>(count - 1);
    zs.push_back(lo * std::pow(hi / lo, frac));
  }
  return zs;
}

}  // namespace cbdi
