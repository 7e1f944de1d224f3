#pragma once

#include <memory>
#include <string>
#include <vector>

namespace cbdi {

/// Immutable expression tree for nonnegative rate functions of one variable.
/// Built-ins are combined with affine maps, truncation of the argument,
/// min/max and sums; copies share the tree.
class RateFunction {
 public:
  enum class Op { Constant, Identity, Square, Affine, Truncate, Min, Max, Sum };

  RateFunction() : RateFunction(constant(0.0)) {}

  static RateFunction constant(double value);
  static RateFunction identity();
  static RateFunction square();
  static RateFunction min(const RateFunction& f, const RateFunction& g);
  static RateFunction max(const RateFunction& f, const RateFunction& g);
  static RateFunction sum(const RateFunction& f, const RateFunction& g);

  /// x -> scale * f(x) + shift
  RateFunction affine(double scale, double shift = 0.0) const;
  /// x -> f(min(x, level))
  RateFunction truncated(double level) const;

  double operator()(double x) const;

  Op op() const;
  double parameter(std::size_t i) const;
  const std::vector<RateFunction>& children() const;

  bool is_constant() const { return op() == Op::Constant; }
  std::string to_string() const;

 private:
  struct Node;
  explicit RateFunction(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  std::shared_ptr<const Node> node_;
};

}  // namespace cbdi
