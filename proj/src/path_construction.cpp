#include "cbdi/path_construction.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "cbdi/errors.hpp"

namespace cbdi {

namespace {

// 3-point Gauss-Legendre on [0, 1].
constexpr std::array<double, 3> kNode{0.5 - 0.3872983346207417, 0.5, 0.5 + 0.3872983346207417};
constexpr std::array<double, 3> kWeight{5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};

constexpr std::uint64_t kInjectedTag = std::uint64_t{1} << 63;

// Doubling schedule shared by both layer kinds, so that repeated calls with
// slightly different needs settle on the same bounds.
void cover(DriverAtoms& atoms, AtomKind kind, double need) {
  double b = atoms.bound(kind);
  if (need <= b) return;
  b = std::max(b, 1.0);
  while (b < need) b *= 2.0;
  atoms.extend(kind, b);
}

double sup_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

double sup_abs(const std::vector<double>& a) {
  double d = 0.0;
  for (double v : a) d = std::max(d, std::abs(v));
  return d;
}

double size_sup(const RateFunction& g_size, const LevyMeasure& nu) {
  if (g_size.is_constant()) return g_size(0.0);
  double sup = 0.0;
  for (double z : nu.audit_points(256)) sup = std::max(sup, g_size(z));
  return sup;
}

double small_size_moment(const RateFunction& g_size, const LevyMeasure& nu, double eps) {
  if (nu.is_zero() || eps <= 0.0) return 0.0;
  if (g_size.is_constant()) return g_size(0.0) * nu.partial_moment(1, 0.0, eps);
  return nu.integrate([&](double z) { return g_size(z) * z; }, 0.0, eps);
}

// Adds the atoms' trajectories to `sum` in atom order.  Returns false (and
// leaves `sum` untouched) when an atom's rate exceeds the current layer
// bound, after raising the bound; the caller then retries.
template <class Rate>
bool add_children(ConstructionState& state, AtomKind kind, Rate rate, std::vector<double>& sum, double dt) {
  const double bound = state.atoms().bound(kind);
  const auto atoms = state.active_atoms(kind);
  std::vector<const PoissonAtom*> kept;
  for (const auto& a : atoms) {
    double r = rate(a);
    if (r > bound && (a.id & kInjectedTag) == 0) {
      cover(state.atoms(), kind, r);
      return false;
    }
    if (a.u <= r) kept.push_back(&a);
  }
  const std::size_t n = sum.size();
  for (const PoissonAtom* a : kept) {
    const ImmigrantPath& c = state.child(kind, *a);
    auto j = static_cast<std::size_t>(std::ceil(c.birth / dt - 1e-9));
    for (; j < n; ++j) sum[j] += c.trajectory.at(dt * static_cast<double>(j));
  }
  return true;
}

}  // namespace

ConstructionState::ConstructionState(BranchingMechanism mech, LevyMeasure nu, const ConstructionParams& params)
    : mech_(std::move(mech)), nu_(std::move(nu)), sol_(mech_), params_(params) {
  auto slope = phi_prime_at_infinity(mech_);
  delta_finite_ = slope.finite;
  delta_ = slope.value;
  DriverSpec spec;
  spec.seed = params_.seed;
  spec.path_id = params_.path_id;
  spec.horizon = params_.T;
  spec.base_dt = params_.dt;
  spec.bounds = params_.bounds;
  if (!delta_finite_) spec.bounds.excursion = 0.0;
  spec.eps = params_.eps;
  atoms_ = DriverAtoms::sample(spec, mech_, nu_);

  SchemeParams sp;
  sp.T = params_.T;
  sp.dt = params_.dt;
  sp.record_jumps = false;
  base_ = simulate_cbdi_sde(mech_, nu_, DependentRates::none(), params_.x0, sp, atoms_);
}

void ConstructionState::inject(AtomKind kind, PoissonAtom atom) {
  if (kind == AtomKind::Branching) throw std::invalid_argument("inject: only excursion or immigrant atoms");
  if (kind == AtomKind::Excursion && !delta_finite_)
    throw UnsupportedRegime("excursion construction requires φ′(∞)<∞ (mechanism " + mech_.describe() + ")");
  atom.id = kInjectedTag | injected_count_++;
  injected_[kind].push_back(atom);
}

void ConstructionState::drop(AtomKind kind, const std::function<bool(const PoissonAtom&)>& pred) {
  for (const auto& a : atoms_.atoms(kind))
    if (pred(a)) dropped_[kind].insert(a.id);
}

std::vector<PoissonAtom> ConstructionState::active_atoms(AtomKind kind) const {
  std::vector<PoissonAtom> out;
  auto d = dropped_.find(kind);
  for (const auto& a : atoms_.atoms(kind))
    if (d == dropped_.end() || !d->second.count(a.id)) out.push_back(a);
  if (auto it = injected_.find(kind); it != injected_.end()) out.insert(out.end(), it->second.begin(), it->second.end());
  return out;
}

const ImmigrantPath& ConstructionState::child(AtomKind kind, const PoissonAtom& atom) {
  auto key = std::make_pair(kind, atom.id);
  if (auto it = pool_.find(key); it != pool_.end()) return it->second;

  ImmigrantPath p;
  p.kind = kind;
  p.alpha = kind == AtomKind::Excursion ? atom.alpha : 0.0;
  p.birth = atom.s + p.alpha;
  p.initial_mass = atom.z;
  const double dt = params_.dt;
  // the child lives on its own grid birth + k dt, long enough to reach T
  auto n = static_cast<std::size_t>(std::max(1.0, std::ceil((params_.T - p.birth) / dt - 1e-9)));
  if (p.birth >= params_.T) n = 1;

  DriverSpec spec;
  spec.seed = params_.seed;
  spec.path_id = atoms_.child_path_id(kind, atom.id);
  spec.horizon = dt * static_cast<double>(n);
  spec.base_dt = dt;
  spec.bounds = LayerBounds{std::max(4.0, 2.0 * atom.z), 0.0, 0.0};
  spec.eps = params_.eps;
  DriverAtoms noise = DriverAtoms::sample(spec, mech_, LevyMeasure::zero());

  SchemeParams sp;
  sp.T = spec.horizon;
  sp.dt = dt;
  sp.record_jumps = false;
  p.trajectory = simulate_cbdi_sde(mech_, LevyMeasure::zero(), DependentRates::none(), atom.z, sp, noise);
  p.trajectory.t0 = p.birth;
  return pool_.emplace(key, std::move(p)).first->second;
}

FieldDecomposition evaluate_field(ConstructionState& state, const DeterministicRates& rates) {
  const auto& mech = state.mechanism();
  const auto& params = state.params();
  const std::size_t N = state.steps();
  const double dt = params.dt;

  FieldDecomposition f;
  f.dt = dt;
  f.X = state.base().values;
  f.drift.assign(N + 1, 0.0);
  f.excursion_sum.assign(N + 1, 0.0);
  f.immigrant_sum.assign(N + 1, 0.0);

  // rates at the Gauss nodes of every cell
  std::vector<std::array<double, 3>> rho(N), gt(N);
  double rho_sup = 0.0, gt_sup = 0.0;
  for (std::size_t j = 0; j < N; ++j)
    for (int g = 0; g < 3; ++g) {
      double s = dt * (static_cast<double>(j) + kNode[g]);
      rho[j][g] = rates.rho(s);
      gt[j][g] = rates.g_time(s);
      if (rho[j][g] < 0.0 || gt[j][g] < 0.0) throw std::invalid_argument("evaluate_field: negative rate");
      rho_sup = std::max(rho_sup, rho[j][g]);
      gt_sup = std::max(gt_sup, gt[j][g]);
    }

  if (rho_sup > 0.0 && !state.excursions_supported())
    throw UnsupportedRegime("excursion construction requires φ′(∞)<∞ (mechanism " + mech.describe() +
                            "); use the sde route");

  // int_0^t h_{t-s} rho(s) ds with h_t = e^{-delta t}
  if (rho_sup > 0.0) {
    const double delta = state.delta();
    const double decay = std::exp(-delta * dt);
    std::array<double, 3> w{};
    for (int g = 0; g < 3; ++g) w[g] = dt * kWeight[g] * std::exp(-delta * (1.0 - kNode[g]) * dt);
    for (std::size_t j = 0; j < N; ++j)
      f.drift[j + 1] = decay * f.drift[j] + (w[0] * rho[j][0] + w[1] * rho[j][1] + w[2] * rho[j][2]);
  }

  const double eps0 = state.atoms().truncation(AtomKind::Excursion);
  const double eps_nu = state.atoms().truncation(AtomKind::Immigration);
  const double M1m = (rho_sup > 0.0 && !mech.m.is_zero()) ? mech.m.partial_moment(1, 0.0, eps0) : 0.0;
  const double G = gt_sup > 0.0 ? small_size_moment(rates.g_size, state.immigration_measure(), eps_nu) : 0.0;
  const double eb = std::exp(-mech.b * dt);

  // mean of the excursions started below eps0: M1 int_0^t e^{-b(t-r)} D(r) dr
  if (params.mean_corrections && M1m > 0.0) {
    double c = 0.0;
    for (std::size_t j = 0; j < N; ++j) {
      c = eb * c + 0.5 * dt * (eb * f.drift[j] + f.drift[j + 1]);
      f.excursion_sum[j + 1] = M1m * c;
    }
  }
  // mean of the immigrants below eps_nu: G int_0^t e^{-b(t-s)} g_time(s) ds
  if (params.mean_corrections && G > 0.0) {
    std::array<double, 3> w{};
    for (int g = 0; g < 3; ++g) w[g] = dt * kWeight[g] * std::exp(-mech.b * (1.0 - kNode[g]) * dt);
    double c = 0.0;
    for (std::size_t j = 0; j < N; ++j) {
      c = eb * c + (w[0] * gt[j][0] + w[1] * gt[j][1] + w[2] * gt[j][2]);
      f.immigrant_sum[j + 1] = G * c;
    }
  }

  if (rho_sup > 0.0) {
    cover(state.atoms(), AtomKind::Excursion, rho_sup);
    auto base = f.excursion_sum;
    while (!add_children(state, AtomKind::Excursion, [&](const PoissonAtom& a) { return rates.rho(a.s); },
                         f.excursion_sum, dt))
      f.excursion_sum = base;
  }
  if (gt_sup > 0.0 && !state.immigration_measure().is_zero()) {
    cover(state.atoms(), AtomKind::Immigration, gt_sup * size_sup(rates.g_size, state.immigration_measure()));
    auto base = f.immigrant_sum;
    while (!add_children(state, AtomKind::Immigration, [&](const PoissonAtom& a) { return rates.g(a.s, a.z); },
                         f.immigrant_sum, dt))
      f.immigrant_sum = base;
  } else if (gt_sup > 0.0) {
    // only hand-placed immigrants can contribute
    add_children(state, AtomKind::Immigration, [&](const PoissonAtom& a) { return rates.g(a.s, a.z); },
                 f.immigrant_sum, dt);
  }

  f.Y.resize(N + 1);
  for (std::size_t j = 0; j <= N; ++j) f.Y[j] = ((f.X[j] + f.drift[j]) + f.excursion_sum[j]) + f.immigrant_sum[j];

  const double delta = state.delta();
  const double exc_part = M1m > 0.0 && delta > 0.0 ? rho_sup * M1m / delta : 0.0;
  f.truncation_bias_bound = std::exp(std::abs(mech.b) * params.T) * params.T * (exc_part + gt_sup * G);
  return f;
}

double evaluate_field(ConstructionState& state, const DeterministicRates& rates, double t) {
  auto f = evaluate_field(state, rates);
  if (t < 0.0 || t > state.params().T * (1.0 + 1e-12)) throw std::invalid_argument("evaluate_field: t outside [0, T]");
  auto j = static_cast<std::size_t>(std::floor(t / f.dt + 1e-9));
  return f.Y[std::min(j, f.Y.size() - 1)];
}

SamplePath PicardReport::path() const {
  SamplePath p;
  p.dt = field.dt;
  p.values = field.Y;
  return p;
}

double PicardReport::worst_ratio(std::size_t skip) const {
  double worst = 0.0;
  for (std::size_t k = skip; k + 1 < sup_diffs.size(); ++k) {
    if (sup_diffs[k] == 0.0) continue;
    worst = std::max(worst, sup_diffs[k + 1] / sup_diffs[k]);
  }
  return worst;
}

DeterministicRates rates_from_iterate(const DependentRates& rates, const std::vector<double>& prev, double dt,
                                      double level) {
  auto y = std::make_shared<const std::vector<double>>(prev);
  auto read = [y, dt, level](double s) {
    // value at the last grid point strictly before s
    double c = std::ceil(s / dt) - 1.0;
    auto i = static_cast<std::size_t>(std::clamp(c, 0.0, static_cast<double>(y->size() - 1)));
    return std::min((*y)[i], level);
  };
  DeterministicRates out;
  auto beta = rates.beta;
  auto q_state = rates.q_state;
  out.rho = [read, beta](double s) { return std::max(0.0, beta(read(s))); };
  out.g_time = [read, q_state](double s) { return std::max(0.0, q_state(read(s))); };
  out.g_size = rates.q_size;
  return out;
}

PicardReport picard_solve(ConstructionState& state, const DependentRates& rates, const PicardParams& params,
                          const std::vector<double>& initial) {
  const double dt = state.params().dt;
  std::vector<double> prev = initial.empty() ? state.base().values : initial;
  if (prev.size() != state.steps() + 1) throw std::invalid_argument("picard_solve: initial iterate has wrong length");

  PicardReport rep;
  rep.level = params.level0;
  for (int k = 1; k <= params.max_iter; ++k) {
    rep.field = evaluate_field(state, rates_from_iterate(rates, prev, dt, rep.level));
    const auto& Y = rep.field.Y;
    rep.sup_diffs.push_back(sup_abs_diff(Y, prev));
    rep.iterations = k;
    double top = *std::max_element(Y.begin(), Y.end());
    if (top >= rep.level) {
      while (top >= rep.level) rep.level *= 2.0;
      if (rep.level > params.max_level) {
        std::ostringstream os;
        os << "picard_solve: localization level " << rep.level << " exceeds " << params.max_level;
        throw LocalizationError(os.str(), rep.level);
      }
    } else if (rep.sup_diffs.back() <= params.tol * (1.0 + sup_abs(Y))) {
      rep.converged = true;
      break;
    }
    prev = Y;
  }
  return rep;
}

void audit_comparison(const DependentRates& rates, const DependentRates& rates_prime, const LevyMeasure& nu,
                      double level) {
  std::vector<double> xs = default_condition_grid();
  for (int i = 1; i <= 64; ++i) xs.push_back(level * i / 64.0);
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());

  auto slack = [](double v) { return 1e-12 * (1.0 + std::abs(v)); };
  auto increasing = [&](const std::function<double(double)>& f) {
    for (std::size_t i = 1; i < xs.size(); ++i)
      if (f(xs[i]) < f(xs[i - 1]) - slack(f(xs[i - 1]))) return false;
    return true;
  };

  for (double x : xs)
    if (rates.beta(x) > rates_prime.beta(x) + slack(rates_prime.beta(x))) {
      std::ostringstream os;
      os << "comparison hypothesis violated: beta(" << x << ") = " << rates.beta(x) << " > beta'(" << x
         << ") = " << rates_prime.beta(x);
      throw HypothesisViolation(os.str());
    }
  if (!increasing([&](double x) { return rates.beta(x); }) && !increasing([&](double x) { return rates_prime.beta(x); }))
    throw HypothesisViolation("comparison hypothesis violated: neither beta nor beta' is increasing");

  std::vector<double> zs = nu.is_zero() ? std::vector<double>{} : nu.audit_points(64);
  for (double z : zs) {
    for (double x : xs)
      if (rates.q(x, z) > rates_prime.q(x, z) + slack(rates_prime.q(x, z))) {
        std::ostringstream os;
        os << "comparison hypothesis violated: q(" << x << ", " << z << ") > q'(" << x << ", " << z << ")";
        throw HypothesisViolation(os.str());
      }
    if (!increasing([&](double x) { return rates.q(x, z); }) &&
        !increasing([&](double x) { return rates_prime.q(x, z); })) {
      std::ostringstream os;
      os << "comparison hypothesis violated: neither q(., " << z << ") nor q'(., " << z << ") is increasing";
      throw HypothesisViolation(os.str());
    }
  }
}

ComparisonReport coupled_compare(ConstructionState& state, const DependentRates& rates,
                                 const DependentRates& rates_prime, const PicardParams& params) {
  audit_comparison(rates, rates_prime, state.immigration_measure(), params.level0);

  const double dt = state.params().dt;
  ComparisonReport rep;
  std::vector<double> a = state.base().values, b = a;
  double level = params.level0;
  bool done_a = false, done_b = false;
  for (int k = 1; k <= params.max_iter; ++k) {
    rep.lower.field = evaluate_field(state, rates_from_iterate(rates, a, dt, level));
    rep.upper.field = evaluate_field(state, rates_from_iterate(rates_prime, b, dt, level));
    const auto& Ya = rep.lower.field.Y;
    const auto& Yb = rep.upper.field.Y;
    rep.lower.sup_diffs.push_back(sup_abs_diff(Ya, a));
    rep.upper.sup_diffs.push_back(sup_abs_diff(Yb, b));
    rep.iterations = rep.lower.iterations = rep.upper.iterations = k;
    double top = std::max(*std::max_element(Ya.begin(), Ya.end()), *std::max_element(Yb.begin(), Yb.end()));
    if (top >= level) {
      while (top >= level) level *= 2.0;
      if (level > params.max_level)
        throw LocalizationError("coupled_compare: localization level exceeds maximum", level);
      done_a = done_b = false;
    } else {
      done_a = rep.lower.sup_diffs.back() <= params.tol * (1.0 + sup_abs(Ya));
      done_b = rep.upper.sup_diffs.back() <= params.tol * (1.0 + sup_abs(Yb));
    }
    a = Ya;
    b = Yb;
    if (done_a && done_b) break;
  }
  rep.lower.converged = done_a;
  rep.upper.converged = done_b;
  rep.lower.level = rep.upper.level = level;
  rep.converged = done_a && done_b;

  for (std::size_t j = 0; j < a.size(); ++j) {
    double gap = a[j] - b[j];
    if (gap > 0.0) {
      ++rep.violations;
      rep.max_gap = std::max(rep.max_gap, gap);
    }
  }
  return rep;
}

UniquenessReport pathwise_uniqueness_check(ConstructionState& state, const DependentRates& rates, double shift,
                                           PicardParams params) {
  UniquenessReport rep;
  rep.from_base = picard_solve(state, rates, params);
  std::vector<double> start = state.base().values;
  for (double& v : start) v += shift;
  rep.from_shifted = picard_solve(state, rates, params, start);
  rep.sup_gap = sup_abs_diff(rep.from_base.field.Y, rep.from_shifted.field.Y);
  return rep;
}

KuznetsovReport kuznetsov_marginal_check(const BranchingMechanism& mech, double t, double lambda,
                                         std::size_t replicates, std::uint64_t seed, double dt, double eps0) {
  auto slope = phi_prime_at_infinity(mech);
  if (!slope.finite)
    throw UnsupportedRegime("excursion construction requires φ′(∞)<∞ (mechanism " + mech.describe() + ")");
  if (!(t > 0.0) || !(lambda >= 0.0) || replicates == 0)
    throw std::invalid_argument("kuznetsov_marginal_check: need t > 0, lambda >= 0, replicates > 0");

  KuznetsovReport rep;
  rep.t = t;
  rep.lambda = lambda;
  CumulantSolution sol(mech);
  rep.analytic = sol.v(t, lambda) - sol.h(t) * lambda;
  const double delta = slope.value;
  const double M1 = mech.m.is_zero() ? 0.0 : mech.m.partial_moment(1, 0.0, eps0);
  // 1 - e^{-lambda w} <= lambda w and E w(t) from x is x e^{-b(t - alpha)}
  rep.remainder_bound = lambda * M1 * std::exp(std::abs(mech.b) * t) * (delta > 0.0 ? std::min(t, 1.0 / delta) : t);

  // the horizon sets both the s-box and the alpha range, so alpha up to t is kept
  const double horizon = std::max(1.0, std::ceil(t / dt - 1e-9) * dt);
  ConstructionParams cp;
  cp.T = horizon;
  cp.dt = dt;
  cp.x0 = 0.0;
  cp.seed = seed;
  cp.bounds = LayerBounds{4.0, 0.0, 1.0};
  cp.eps.eps_0 = eps0;

  RunningStats stats;
  for (std::size_t r = 0; r < replicates; ++r) {
    cp.path_id = r;
    ConstructionState state(mech, LevyMeasure::zero(), cp);
    double sum = 0.0;
    for (const auto& a : state.atoms().atoms(AtomKind::Excursion)) {
      if (a.u > 1.0) continue;
      if (a.alpha > t) continue;
      // only the excursion's own clock matters; moving it to s = 0 keeps its
      // trajectory inside the simulated window
      PoissonAtom at_zero = a;
      at_zero.s = 0.0;
      const ImmigrantPath& c = state.child(AtomKind::Excursion, at_zero);
      double w = c.trajectory.at(t);
      sum += -std::expm1(-lambda * w);
    }
    stats.add(sum / horizon);
  }
  rep.estimate = McEstimate::from(stats, seed);
  rep.passed = std::abs(rep.estimate.value - rep.analytic) <= 3.0 * rep.estimate.std_error + rep.remainder_bound;
  return rep;
}

void write_decomposition_csv(std::ostream& os, const FieldDecomposition& f) {
  os << "# cbdi-decomposition v1\n";
  os << "t,X,continuous_drift_term,excursion_sum,immigrant_sum,Y\n";
  os.precision(17);
  for (std::size_t j = 0; j < f.size(); ++j)
    os << f.time(j) << ',' << f.X[j] << ',' << f.drift[j] << ',' << f.excursion_sum[j] << ',' << f.immigrant_sum[j]
       << ',' << f.Y[j] << '\n';
}

}  // namespace cbdi
