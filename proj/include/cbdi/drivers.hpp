#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <vector>

#include "cbdi/mechanisms.hpp"

namespace cbdi {

enum class AtomKind : std::uint32_t { Branching = 1, Immigration = 2, Excursion = 3 };

const char* to_string(AtomKind kind);

/// One point of a Poisson random measure.  For branching and immigration
/// atoms z is the jump size; for excursion atoms z is the initial mass x and
/// alpha the delay before the excursion starts.
struct PoissonAtom {
  double s = 0.0;
  double z = 0.0;
  double u = 0.0;
  double alpha = 0.0;
  std::uint64_t id = 0;  // (layer << 32) | index within layer
};

struct Truncations {
  double eps_m = 1e-3;
  double eps_nu = 1e-3;
  double eps_0 = 1e-3;
};

/// Initial u-coordinate bounds; they also fix the layer widths.  A zero
/// immigration or excursion bound means no atoms of that kind until extended.
struct LayerBounds {
  double branching = 4.0;
  double immigration = 4.0;
  double excursion = 0.0;
};

struct DriverSpec {
  std::uint64_t seed = 1;
  std::uint64_t path_id = 0;
  double horizon = 1.0;
  double base_dt = 1e-3;
  LayerBounds bounds;
  Truncations eps;
};

/// Frozen randomness for one path: Brownian normals on the base grid and the
/// atoms of the branching, immigration and excursion point measures.  Atoms
/// are generated layer by layer in u so that raising a bound only appends the
/// atoms above the old bound; every layer has its own counter-based
/// substream, which makes the result independent of the extension schedule.
class DriverAtoms {
 public:
  static DriverAtoms sample(const DriverSpec& spec, const BranchingMechanism& mech, const LevyMeasure& nu);

  /// Standard normal attached to base cell `cell` (random access).
  double brownian(std::size_t cell) const;
  /// Sum of the normals of cells [first, first + count).
  double brownian_sum(std::size_t first, std::size_t count) const;

  const std::vector<PoissonAtom>& atoms(AtomKind kind) const { return layer(kind).atoms; }
  double bound(AtomKind kind) const { return layer(kind).bound; }
  double truncation(AtomKind kind) const { return layer(kind).eps; }
  /// Intensity mass per unit s per unit u of the sampled (truncated) measure.
  double rate(AtomKind kind) const { return layer(kind).rate; }

  /// Raise the u-bound of one kind; a bound at or below the current one is a no-op.
  void extend(AtomKind kind, double new_bound);

  /// Child stream for the trajectory started by a given atom.
  std::uint64_t child_path_id(AtomKind kind, std::uint64_t atom_id) const;

  std::uint64_t seed() const { return spec_.seed; }
  std::uint64_t path_id() const { return spec_.path_id; }
  double horizon() const { return spec_.horizon; }
  double base_dt() const { return spec_.base_dt; }
  double delta() const { return delta_; }
  const DriverSpec& spec() const { return spec_; }

 private:
  struct Layered {
    AtomKind kind{};
    double eps = 0.0;
    double width = 1.0;
    double bound = 0.0;
    double rate = 0.0;
    std::vector<PoissonAtom> atoms;
  };

  const Layered& layer(AtomKind kind) const;
  Layered& layer(AtomKind kind);
  void add_range(Layered& set, double lo, double hi);

  DriverSpec spec_;
  std::uint64_t key_ = 0;
  std::shared_ptr<const BranchingMechanism> mech_;
  std::shared_ptr<const LevyMeasure> nu_;
  double delta_ = 0.0;
  bool delta_finite_ = false;
  Layered branching_, immigration_, excursion_;
};

DriverAtoms sample_atoms(const DriverSpec& spec, const BranchingMechanism& mech, const LevyMeasure& nu);

/// Copying form of DriverAtoms::extend.
DriverAtoms extend_layer(const DriverAtoms& atoms, AtomKind kind, double new_bound);

/// CSV dump with columns kind,s,z_or_x,u,alpha.
void write_atoms_csv(std::ostream& os, const DriverAtoms& atoms);

}  // namespace cbdi
