#include "cbdi/drivers.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <utility>

#include "cbdi/errors.hpp"
#include "cbdi/rng.hpp"

namespace cbdi {

namespace {

constexpr std::uint32_t kBrownianDomain = 0;
constexpr std::uint32_t kBrownianLayer = 0xFFFFFFFFu;

bool atom_less(const PoissonAtom& a, const PoissonAtom& b) {
  return a.s < b.s || (a.s == b.s && a.id < b.id);
}

}  // namespace

const char* to_string(AtomKind kind) {
  switch (kind) {
    case AtomKind::Branching: return "branching";
    case AtomKind::Immigration: return "immigration";
    case AtomKind::Excursion: return "excursion";
  }
  return "?";
}

DriverAtoms DriverAtoms::sample(const DriverSpec& spec, const BranchingMechanism& mech, const LevyMeasure& nu) {
  if (!(spec.horizon > 0.0)) throw std::invalid_argument("sample_atoms: horizon must be > 0");
  if (!(spec.base_dt > 0.0)) throw std::invalid_argument("sample_atoms: base_dt must be > 0");
  const auto& e = spec.eps;
  if (!(e.eps_m > 0.0) || !(e.eps_nu > 0.0) || !(e.eps_0 > 0.0))
    throw std::invalid_argument("sample_atoms: truncations must be > 0");
  const auto& b = spec.bounds;
  if (!(b.branching > 0.0) || !(b.immigration >= 0.0) || !(b.excursion >= 0.0))
    throw std::invalid_argument("sample_atoms: branching bound must be > 0, the others >= 0");

  DriverAtoms out;
  out.spec_ = spec;
  out.key_ = hash_combine(spec.seed, spec.path_id);
  out.mech_ = std::make_shared<const BranchingMechanism>(mech);
  out.nu_ = std::make_shared<const LevyMeasure>(nu);
  auto d = phi_prime_at_infinity(mech);
  out.delta_ = d.value;
  out.delta_finite_ = d.finite;

  const double T = spec.horizon;
  out.branching_ = {AtomKind::Branching, e.eps_m, b.branching, 0.0, mech.m.tail_mass(e.eps_m), {}};
  out.immigration_ = {AtomKind::Immigration, e.eps_nu, b.immigration > 0.0 ? b.immigration : 1.0, 0.0,
                      nu.tail_mass(e.eps_nu), {}};
  double alpha_mass = 0.0;
  if (d.finite) alpha_mass = d.value == 0.0 ? T : -std::expm1(-d.value * T) / d.value;
  out.excursion_ = {AtomKind::Excursion, e.eps_0, b.excursion > 0.0 ? b.excursion : 1.0, 0.0,
                    d.finite ? mech.m.tail_mass(e.eps_0) * alpha_mass : 0.0, {}};

  out.extend(AtomKind::Branching, b.branching);
  if (b.immigration > 0.0) out.extend(AtomKind::Immigration, b.immigration);
  if (b.excursion > 0.0) out.extend(AtomKind::Excursion, b.excursion);
  return out;
}

const DriverAtoms::Layered& DriverAtoms::layer(AtomKind kind) const {
  switch (kind) {
    case AtomKind::Branching: return branching_;
    case AtomKind::Immigration: return immigration_;
    case AtomKind::Excursion: return excursion_;
  }
  throw std::invalid_argument("unknown atom kind");
}

DriverAtoms::Layered& DriverAtoms::layer(AtomKind kind) {
  return const_cast<Layered&>(std::as_const(*this).layer(kind));
}

double DriverAtoms::brownian(std::size_t cell) const {
  std::uint64_t pair = cell / 2;
  Philox4x32::Block ctr{static_cast<std::uint32_t>(pair), static_cast<std::uint32_t>(pair >> 32), kBrownianLayer,
                        kBrownianDomain};
  auto u = block_uniforms(Philox4x32::generate(ctr, key_));
  return box_muller(u[0], u[1])[cell % 2];
}

double DriverAtoms::brownian_sum(std::size_t first, std::size_t count) const {
  if (count == 1) return brownian(first);
  double sum = 0.0;
  std::size_t cell = first, end = first + count;
  while (cell < end) {
    std::uint64_t pair = cell / 2;
    Philox4x32::Block ctr{static_cast<std::uint32_t>(pair), static_cast<std::uint32_t>(pair >> 32),
                          kBrownianLayer, kBrownianDomain};
    auto u = block_uniforms(Philox4x32::generate(ctr, key_));
    auto z = box_muller(u[0], u[1]);
    if (cell % 2 == 0) {
      sum += z[0];
      ++cell;
      if (cell < end) {
        sum += z[1];
        ++cell;
      }
    } else {
      sum += z[1];
      ++cell;
    }
  }
  return sum;
}

void DriverAtoms::add_range(Layered& set, double lo, double hi) {
  if (set.rate <= 0.0 || !(hi > lo)) return;
  const double w = set.width, T = spec_.horizon;
  const LevyMeasure& measure = set.kind == AtomKind::Immigration ? *nu_ : mech_->m;
  auto first = static_cast<std::uint64_t>(std::floor(lo / w));
  auto last = static_cast<std::uint64_t>(std::ceil(hi / w));
  if (last - first > (1u << 24)) throw LocalizationError("layer extension too large", hi);
  std::vector<PoissonAtom> fresh;
  for (std::uint64_t j = first; j < last; ++j) {
    CounterStream rng(key_, static_cast<std::uint32_t>(set.kind), static_cast<std::uint32_t>(j));
    const double intensity = set.rate * w;
    double s = 0.0;
    std::uint64_t index = 0;
    while (true) {
      s += rng.exponential() / intensity;
      if (s > T) break;
      PoissonAtom a;
      a.s = s;
      a.z = measure.sample_above(set.eps, rng.uniform());
      a.u = (static_cast<double>(j) + rng.uniform()) * w;
      if (set.kind == AtomKind::Excursion) {
        double v = rng.uniform();
        a.alpha = delta_ == 0.0 ? v * T : -std::log1p(v * std::expm1(-delta_ * T)) / delta_;
        a.alpha = std::clamp(a.alpha, 0.0, T);
      }
      a.id = (j << 32) | index++;
      if (a.u > lo && a.u <= hi) fresh.push_back(a);
    }
  }
  std::sort(fresh.begin(), fresh.end(), atom_less);
  std::size_t mid = set.atoms.size();
  set.atoms.insert(set.atoms.end(), fresh.begin(), fresh.end());
  std::inplace_merge(set.atoms.begin(), set.atoms.begin() + static_cast<std::ptrdiff_t>(mid), set.atoms.end(),
                     atom_less);
}

void DriverAtoms::extend(AtomKind kind, double new_bound) {
  Layered& set = layer(kind);
  if (kind == AtomKind::Excursion && !delta_finite_ && new_bound > 0.0)
    throw UnsupportedRegime("excursion construction requires φ′(∞)<∞ (mechanism " + mech_->describe() + ")");
  if (!(new_bound > set.bound)) return;
  double lo = set.bound;
  add_range(set, lo, new_bound);
  set.bound = new_bound;
}

std::uint64_t DriverAtoms::child_path_id(AtomKind kind, std::uint64_t atom_id) const {
  return hash_combine(hash_combine(spec_.path_id, static_cast<std::uint64_t>(kind)), atom_id);
}

DriverAtoms sample_atoms(const DriverSpec& spec, const BranchingMechanism& mech, const LevyMeasure& nu) {
  return DriverAtoms::sample(spec, mech, nu);
}

DriverAtoms extend_layer(const DriverAtoms& atoms, AtomKind kind, double new_bound) {
  DriverAtoms out = atoms;
  out.extend(kind, new_bound);
  return out;
}

void write_atoms_csv(std::ostream& os, const DriverAtoms& atoms) {
  os << "kind,s,z_or_x,u,alpha\n";
  for (AtomKind kind : {AtomKind::Branching, AtomKind::Immigration, AtomKind::Excursion})
    for (const auto& a : atoms.atoms(kind))
      os << to_string(kind) << ',' << a.s << ',' << a.z << ',' << a.u << ',' << a.alpha << '\n';
}

}  // namespace cbdi
