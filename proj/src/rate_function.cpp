#include "cbdi/rate_function.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace cbdi {

struct RateFunction::Node {
  Op op;
  double a = 0.0;
  double b = 0.0;
  std::vector<RateFunction> kids;
};

RateFunction RateFunction::constant(double value) {
  return RateFunction(std::make_shared<const Node>(Node{Op::Constant, value, 0.0, {}}));
}

RateFunction RateFunction::identity() {
  return RateFunction(std::make_shared<const Node>(Node{Op::Identity, 0.0, 0.0, {}}));
}

RateFunction RateFunction::square() {
  return RateFunction(std::make_shared<const Node>(Node{Op::Square, 0.0, 0.0, {}}));
}

RateFunction RateFunction::min(const RateFunction& f, const RateFunction& g) {
  return RateFunction(std::make_shared<const Node>(Node{Op::Min, 0.0, 0.0, {f, g}}));
}

RateFunction RateFunction::max(const RateFunction& f, const RateFunction& g) {
  return RateFunction(std::make_shared<const Node>(Node{Op::Max, 0.0, 0.0, {f, g}}));
}

RateFunction RateFunction::sum(const RateFunction& f, const RateFunction& g) {
  return RateFunction(std::make_shared<const Node>(Node{Op::Sum, 0.0, 0.0, {f, g}}));
}

RateFunction RateFunction::affine(double scale, double shift) const {
  return RateFunction(std::make_shared<const Node>(Node{Op::Affine, scale, shift, {*this}}));
}

RateFunction RateFunction::truncated(double level) const {
  if (!(level >= 0.0)) throw std::invalid_argument("RateFunction::truncated: level must be >= 0");
  return RateFunction(std::make_shared<const Node>(Node{Op::Truncate, level, 0.0, {*this}}));
}

double RateFunction::operator()(double x) const {
  const Node& n = *node_;
  switch (n.op) {
    case Op::Constant: return n.a;
    case Op::Identity: return x;
    case Op::Square: return x * x;
    case Op::Affine: return n.a * n.kids[0](x) + n.b;
    case Op::Truncate: return n.kids[0](std::min(x, n.a));
    case Op::Min: return std::min(n.kids[0](x), n.kids[1](x));
    case Op::Max: return std::max(n.kids[0](x), n.kids[1](x));
    case Op::Sum: return n.kids[0](x) + n.kids[1](x);
  }
  return 0.0;
}

RateFunction::Op RateFunction::op() const { return node_->op; }

double RateFunction::parameter(std::size_t i) const { return i == 0 ? node_->a : node_->b; }

const std::vector<RateFunction>& RateFunction::children() const { return node_->kids; }

std::string RateFunction::to_string() const {
  const Node& n = *node_;
  std::ostringstream os;
  switch (n.op) {
    case Op::Constant: os << n.a; break;
    case Op::Identity: os << "x"; break;
    case Op::Square: os << "x^2"; break;
    case Op::Affine: os << "(" << n.a << "*" << n.kids[0].to_string() << "+" << n.b << ")"; break;
    case Op::Truncate: os << n.kids[0].to_string() << "|x<=" << n.a; break;
    case Op::Min: os << "min(" << n.kids[0].to_string() << "," << n.kids[1].to_string() << ")"; break;
    case Op::Max: os << "max(" << n.kids[0].to_string() << "," << n.kids[1].to_string() << ")"; break;
    case Op::Sum: os << "(" << n.kids[0].to_string() << "+" << n.kids[1].to_string() << ")"; break;
  }
  return os.str();
}

}  // namespace cbdi
