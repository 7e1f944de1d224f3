#pragma once

#include <stdexcept>
#include <string>

namespace cbdi {

/// Quadrature or ODE integration failed to reach the requested accuracy.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The requested construction has no simulable form for this mechanism,
/// e.g. the excursion-based route when phi'(inf) is infinite.
class UnsupportedRegime : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A thinning layer or localization level exceeded its configured maximum.
class LocalizationError : public std::runtime_error {
 public:
  LocalizationError(const std::string& what, double level)
      : std::runtime_error(what), level_(level) {}
  double level() const { return level_; }

 private:
  double level_;
};

/// Comparison hypotheses (ordering / monotonicity) fail on the audit grid.
class HypothesisViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cbdi
