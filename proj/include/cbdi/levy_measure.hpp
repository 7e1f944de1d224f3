#pragma once

#include <functional>
#include <limits>
#include <string>
#include <variant>
#include <vector>

namespace cbdi {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct Atom {
  double z;
  double weight;
};

/// Finite sum of point masses on (0, inf).
struct AtomicMeasure {
  std::vector<Atom> atoms;
};

/// mass * rate * exp(-rate z) dz on (0, inf).
struct ExponentialDensity {
  double mass;
  double rate;
};

/// scale * z^{-1-alpha} dz restricted to (lower, upper].
struct StableKernel {
  double scale;
  double alpha;
  double lower = 0.0;
  double upper = kInf;
};

/// A sigma-finite measure on (0, inf) from a closed set of families whose tail
/// masses and partial moments are exact.  Intervals are half-open [a, b) so that
/// a truncation level eps splits the measure into (0, eps) and [eps, inf).
class LevyMeasure {
 public:
  using Representation = std::variant<AtomicMeasure, ExponentialDensity, StableKernel>;

  LevyMeasure() : rep_(AtomicMeasure{}) {}
  explicit LevyMeasure(Representation rep);

  static LevyMeasure zero() { return LevyMeasure(); }
  static LevyMeasure atomic(std::vector<Atom> atoms);
  static LevyMeasure unit_atom(double z, double weight = 1.0) {
    return atomic({Atom{z, weight}});
  }
  static LevyMeasure exponential(double mass, double rate);
  static LevyMeasure stable(double scale, double alpha, double lower = 0.0,
                            double upper = kInf);

  const Representation& representation() const { return rep_; }
  bool is_zero() const;
  bool is_atomic() const { return std::holds_alternative<AtomicMeasure>(rep_); }
  std::string describe() const;

  /// mu([eps, inf)); finite for every eps > 0.
  double tail_mass(double eps) const;

  /// int_{[a,b)} z^p mu(dz) for p in {0, 1, 2}; may be +inf.
  double partial_moment(int p, double a, double b = kInf) const;

  /// int_{[a,b)} f(z) mu(dz).  Exact for atoms, tanh-sinh/exp-sinh otherwise.
  double integrate(const std::function<double(double)>& f, double a = 0.0,
                   double b = kInf) const;

  /// Inverse CDF of mu restricted to [eps, inf), normalised; u in (0, 1).
  double sample_above(double eps, double u) const;

  /// Largest point of the support (inf for unbounded families).
  double support_upper() const;
  /// Smallest point of the support (0 for families accumulating at 0).
  double support_lower() const;

  /// int (e^{-lambda z} - 1 + lambda z) mu(dz), closed form where available.
  double branching_integral(double lambda) const;
  /// int (1 - e^{-lambda z}) mu(dz), closed form where available.
  double immigration_integral(double lambda) const;

  /// Points useful for auditing functions of z against this measure.
  std::vector<double> audit_points(std::size_t count = 32) const;

 private:
  Representation rep_;
};

/// e^{-x} - 1 + x without cancellation for small x.
double expm1_plus_x(double x);

}  // namespace cbdi
