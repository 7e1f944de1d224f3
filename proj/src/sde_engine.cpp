#include "cbdi/sde_engine.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "cbdi/errors.hpp"

namespace cbdi {

namespace {

// Below this jump size the generator integrands switch to a Taylor form to
// avoid cancellation in f(x+z) - f(x) - z f'(x).
constexpr double kTaylorCut = 1e-4;

std::size_t checked_ratio(double num, double den, const char* what) {
  double r = num / den;
  auto k = static_cast<std::size_t>(std::llround(r));
  if (k == 0 || std::abs(static_cast<double>(k) - r) > 1e-9 * r) {
    std::ostringstream os;
    os << what << ": " << num << " is not an integer multiple of " << den;
    throw std::invalid_argument(os.str());
  }
  return k;
}

std::size_t first_after(const std::vector<PoissonAtom>& atoms, double t) {
  auto it = std::upper_bound(atoms.begin(), atoms.end(), t, [](double v, const PoissonAtom& a) { return v < a.s; });
  return static_cast<std::size_t>(it - atoms.begin());
}

// Raise a layer bound by doubling until it covers `need`.
void cover(DriverAtoms& atoms, AtomKind kind, double need, double max_layer) {
  double b = atoms.bound(kind);
  if (need <= b) return;
  while (b < need) b *= 2.0;
  if (b > max_layer) {
    std::ostringstream os;
    os << to_string(kind) << " thinning level " << need << " exceeds the configured maximum " << max_layer;
    throw LocalizationError(os.str(), need);
  }
  atoms.extend(kind, b);
}

// Horner evaluation of p and its first three derivatives.
std::array<double, 4> poly_derivs(const std::vector<double>& c, double x) {
  std::array<double, 4> d{0, 0, 0, 0};
  for (auto it = c.rbegin(); it != c.rend(); ++it) {
    d[3] = d[3] * x + 3.0 * d[2];
    d[2] = d[2] * x + 2.0 * d[1];
    d[1] = d[1] * x + d[0];
    d[0] = d[0] * x + *it;
  }
  return d;
}

double f3(const TestFunction& f, double x) {
  if (f.kind == TestFunction::Kind::Exponential) return -f.lambda * f.lambda * f.lambda * std::exp(-f.lambda * x);
  auto p = poly_derivs(f.coeffs, x);
  return (p[3] - 3.0 * p[2] + 3.0 * p[1] - p[0]) * std::exp(-x);
}

}  // namespace

double SamplePath::at(double t) const {
  if (values.empty() || t < t0 - 1e-12 * std::max(1.0, std::abs(t0))) return 0.0;
  double r = (t - t0) / dt;
  auto i = static_cast<std::size_t>(std::max(0.0, std::floor(r + 1e-9)));
  return values[std::min(i, steps())];
}

double euler_step_cb(const BranchingMechanism& mech, double y, double dt, const NoiseSlice& noise) {
  if (y < 0.0 || !(dt > 0.0)) throw std::invalid_argument("euler_step_cb: need y >= 0 and dt > 0");
  if (y == 0.0) return 0.0;
  double M1 = mech.m.partial_moment(1, noise.eps_m);
  double next = y - mech.b * y * dt + std::sqrt(2.0 * mech.c * y * dt) * noise.xi - y * dt * M1;
  for (const auto& a : noise.branching)
    if (a.u <= y && a.z >= noise.eps_m) next += a.z;
  return std::max(0.0, next);
}

SamplePath simulate_cbdi_sde(const BranchingMechanism& mech, const LevyMeasure& nu, const DependentRates& rates,
                             double y0, const SchemeParams& params, DriverAtoms& atoms) {
  if (!(y0 >= 0.0)) throw std::invalid_argument("simulate_cbdi_sde: y0 must be >= 0");
  if (!(params.T > 0.0) || !(params.dt > 0.0)) throw std::invalid_argument("simulate_cbdi_sde: T, dt must be > 0");
  if (atoms.horizon() < params.T * (1.0 - 1e-12))
    throw std::invalid_argument("simulate_cbdi_sde: driver horizon shorter than T");
  const std::size_t n = checked_ratio(params.T, params.dt, "simulate_cbdi_sde: T");
  const std::size_t k = checked_ratio(params.dt, atoms.base_dt(), "simulate_cbdi_sde: dt");
  const double sqrt_k = std::sqrt(static_cast<double>(k));

  const double eps_m = atoms.truncation(AtomKind::Branching);
  const double eps_nu = atoms.truncation(AtomKind::Immigration);
  const double M1 = mech.m.is_zero() ? 0.0 : mech.m.partial_moment(1, eps_m);
  const bool branch_jumps = !mech.m.is_zero() && mech.m.tail_mass(eps_m) > 0.0;
  const bool q_active = !(rates.q_state.is_constant() && rates.q_state(0.0) == 0.0) && !nu.is_zero();
  const bool imm_jumps = q_active && nu.tail_mass(eps_nu) > 0.0;
  const double small_imm = (q_active && params.small_jump_drift) ? rates.size_moment(nu, 0.0, eps_nu) : 0.0;
  const double q_sup = imm_jumps ? rates.size_sup(nu) : 0.0;
  const bool constant_q_size = rates.q_size.is_constant();
  const double q_size0 = rates.q_size(0.0);

  SamplePath path;
  path.dt = params.dt;
  path.seed = atoms.seed();
  path.path_id = atoms.path_id();
  path.values.reserve(n + 1);
  path.values.push_back(y0);

  std::size_t bi = 0, ii = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t_lo = params.dt * static_cast<double>(i);
    const double t_hi = params.dt * static_cast<double>(i + 1);
    const double y = path.values.back();
    const double qs = q_active ? rates.q_state(y) : 0.0;

    if (branch_jumps && y > atoms.bound(AtomKind::Branching)) {
      cover(atoms, AtomKind::Branching, y, params.max_layer);
      bi = first_after(atoms.atoms(AtomKind::Branching), t_lo);
    }
    if (imm_jumps && qs * q_sup > atoms.bound(AtomKind::Immigration)) {
      cover(atoms, AtomKind::Immigration, qs * q_sup, params.max_layer);
      ii = first_after(atoms.atoms(AtomKind::Immigration), t_lo);
    }

    double next = y + (rates.beta(y) - mech.b * y - y * M1 + qs * small_imm) * params.dt;
    if (mech.c > 0.0 && y > 0.0) {
      double xi = atoms.brownian_sum(i * k, k) / sqrt_k;
      next += std::sqrt(2.0 * mech.c * y * params.dt) * xi;
    }
    const auto& ba = atoms.atoms(AtomKind::Branching);
    for (; bi < ba.size() && ba[bi].s <= t_hi; ++bi) {
      if (ba[bi].u <= y) {
        next += ba[bi].z;
        if (params.record_jumps) path.jumps.push_back({ba[bi].s, ba[bi].z, JumpOrigin::Branching});
      }
    }
    const auto& ia = atoms.atoms(AtomKind::Immigration);
    for (; ii < ia.size() && ia[ii].s <= t_hi; ++ii) {
      double q = qs * (constant_q_size ? q_size0 : rates.q_size(ia[ii].z));
      if (ia[ii].u <= q) {
        next += ia[ii].z;
        if (params.record_jumps) path.jumps.push_back({ia[ii].s, ia[ii].z, JumpOrigin::Immigration});
      }
    }
    if (next < 0.0) {
      next = 0.0;
      ++path.clamped_steps;
    }
    path.values.push_back(next);
  }
  return path;
}

double TestFunction::value(double x) const {
  if (kind == Kind::Exponential) return lambda == 0.0 ? 1.0 : std::exp(-lambda * x);
  return poly_derivs(coeffs, x)[0] * std::exp(-x);
}

double TestFunction::d1(double x) const {
  if (kind == Kind::Exponential) return lambda == 0.0 ? 0.0 : -lambda * std::exp(-lambda * x);
  auto p = poly_derivs(coeffs, x);
  return (p[1] - p[0]) * std::exp(-x);
}

double TestFunction::d2(double x) const {
  if (kind == Kind::Exponential) return lambda * lambda * std::exp(-lambda * x);
  auto p = poly_derivs(coeffs, x);
  return (p[2] - 2.0 * p[1] + p[0]) * std::exp(-x);
}

double generator_eval(const BranchingMechanism& mech, const LevyMeasure& nu, const DependentRates& rates,
                      const TestFunction& f, double x) {
  if (x < 0.0) throw std::invalid_argument("generator_eval: x must be >= 0");
  const double fx = f.value(x), f1 = f.d1(x), f2 = f.d2(x), f3x = f3(f, x);
  double out = mech.c * x * f2 - mech.b * x * f1 + rates.beta(x) * f1;
  if (x > 0.0 && !mech.m.is_zero()) {
    out += x * mech.m.integrate([&](double z) {
      if (z < kTaylorCut) return 0.5 * z * z * f2 + z * z * z * f3x / 6.0;
      return f.value(x + z) - fx - z * f1;
    });
  }
  double qs = rates.q_state(x);
  if (qs != 0.0 && !nu.is_zero()) {
    out += qs * nu.integrate([&](double z) {
      double jump = z < kTaylorCut ? z * f1 + 0.5 * z * z * f2 : f.value(x + z) - fx;
      return jump * rates.q_size(z);
    });
  }
  return out;
}

ExponentialGenerator::ExponentialGenerator(const BranchingMechanism& mech, const LevyMeasure& nu,
                                           const DependentRates& rates, double lambda)
    : lambda_(lambda), phi_(mech.phi(lambda)), imm_(0.0), rates_(rates) {
  if (!nu.is_zero() && lambda != 0.0) {
    imm_ = rates.q_size.is_constant()
               ? rates.q_size(0.0) * nu.immigration_integral(lambda)
               : nu.integrate([&](double z) { return -std::expm1(-lambda * z) * rates.q_size(z); });
  }
}

double ExponentialGenerator::operator()(double x) const {
  if (lambda_ == 0.0) return 0.0;
  return std::exp(-lambda_ * x) * (x * phi_ - rates_.beta(x) * lambda_ - rates_.q_state(x) * imm_);
}

bool ResidualReport::passed() const {
  return std::all_of(checkpoints.begin(), checkpoints.end(), [](const auto& c) { return c.passed; });
}

MartingaleAccumulator::MartingaleAccumulator(std::function<double(double)> f, std::function<double(double)> Lf,
                                             std::vector<double> checkpoints)
    : f_(std::move(f)), Lf_(std::move(Lf)), checkpoints_(std::move(checkpoints)), stats_(checkpoints_.size()) {
  std::sort(checkpoints_.begin(), checkpoints_.end());
}

void MartingaleAccumulator::add(const SamplePath& path) {
  if (path.values.empty()) return;
  std::vector<std::size_t> idx;
  for (double t : checkpoints_) {
    auto i = static_cast<std::size_t>(std::llround((t - path.t0) / path.dt));
    if (i > path.steps()) throw std::invalid_argument("martingale residual: checkpoint beyond path horizon");
    idx.push_back(i);
  }
  const double f0 = f_(path.values[0]);
  double integral = 0.0;
  std::size_t c = 0;
  for (std::size_t i = 0; i <= path.steps() && c < idx.size(); ++i) {
    while (c < idx.size() && idx[c] == i) {
      stats_[c].add(f_(path.values[i]) - f0 - integral);
      ++c;
    }
    integral += Lf_(path.values[i]) * path.dt;
  }
}

void MartingaleAccumulator::merge(const MartingaleAccumulator& other) {
  for (std::size_t i = 0; i < stats_.size(); ++i) stats_[i].merge(other.stats_[i]);
}

ResidualReport MartingaleAccumulator::report(double gate) const {
  ResidualReport rep;
  rep.gate = gate;
  for (std::size_t i = 0; i < checkpoints_.size(); ++i) {
    ResidualCheckpoint cp;
    cp.t = checkpoints_[i];
    cp.mean = stats_[i].mean();
    cp.std_error = stats_[i].std_error();
    cp.paths = stats_[i].count();
    cp.passed = std::abs(cp.mean) <= gate * cp.std_error;
    rep.checkpoints.push_back(cp);
  }
  return rep;
}

ResidualReport martingale_residual(const std::vector<SamplePath>& paths, const TestFunction& f,
                                   const BranchingMechanism& mech, const LevyMeasure& nu,
                                   const DependentRates& rates, std::vector<double> checkpoints) {
  if (paths.empty()) return {};
  if (checkpoints.empty()) {
    double T = paths.front().horizon();
    checkpoints = {0.25 * T, 0.5 * T, 0.75 * T, T};
  }
  std::function<double(double)> Lf;
  if (f.kind == TestFunction::Kind::Exponential)
    Lf = ExponentialGenerator(mech, nu, rates, f.lambda);
  else
    Lf = [&](double x) { return generator_eval(mech, nu, rates, f, x); };
  MartingaleAccumulator acc([&f](double x) { return f.value(x); }, Lf, checkpoints);
  for (const auto& p : paths) acc.add(p);
  return acc.report();
}

void write_path_csv(std::ostream& os, const SamplePath& path) {
  os << "# cbdi-path v1\n";
  os << "t,value,jump_flag,origin\n";
  std::size_t j = 0;
  for (std::size_t i = 0; i <= path.steps(); ++i) {
    double t = path.time(i);
    bool branch = false, imm = false;
    for (; j < path.jumps.size() && path.jumps[j].time <= t + 1e-12; ++j)
      (path.jumps[j].origin == JumpOrigin::Branching ? branch : imm) = true;
    const char* origin = branch && imm ? "both" : branch ? "branching" : imm ? "immigration" : "";
    os << t << ',' << path.values[i] << ',' << ((branch || imm) ? 1 : 0) << ',' << origin << '\n';
  }
}

}  // namespace cbdi
