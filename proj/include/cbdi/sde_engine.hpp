#pragma once

#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "cbdi/drivers.hpp"
#include "cbdi/mechanisms.hpp"
#include "cbdi/stats.hpp"

namespace cbdi {

enum class JumpOrigin { Branching, Immigration };

struct JumpRecord {
  double time;
  double size;
  JumpOrigin origin;
};

/// Path on the uniform grid t_i = t0 + i dt.  values[i] includes the jumps in
/// (t_{i-1}, t_i]; between grid points the path is read as piecewise constant.
struct SamplePath {
  double t0 = 0.0;
  double dt = 0.0;
  std::vector<double> values;
  std::vector<JumpRecord> jumps;
  std::uint64_t seed = 0;
  std::uint64_t path_id = 0;
  std::size_t clamped_steps = 0;

  std::size_t steps() const { return values.empty() ? 0 : values.size() - 1; }
  double horizon() const { return t0 + dt * static_cast<double>(steps()); }
  double time(std::size_t i) const { return t0 + dt * static_cast<double>(i); }
  /// Value at absolute time t (0 before t0, last value after the horizon).
  double at(double t) const;
  double clamped_fraction() const {
    return steps() ? static_cast<double>(clamped_steps) / static_cast<double>(steps()) : 0.0;
  }
};

struct SchemeParams {
  double T = 1.0;
  double dt = 1e-3;
  bool small_jump_drift = true;  // add int_{(0,eps_nu)} q z nu(dz) as drift
  bool record_jumps = true;
  double max_layer = 1e6;        // largest u-bound the auto-extension may request
};

/// Noise for one step: standardised Gaussian and the branching atoms with s in the step.
struct NoiseSlice {
  double xi = 0.0;
  std::span<const PoissonAtom> branching;
  double eps_m = 1e-3;
};

/// One Euler step of the pure CB equation with left-point thinning u <= y.
double euler_step_cb(const BranchingMechanism& mech, double y, double dt, const NoiseSlice& noise);

/// Euler scheme for the CBDI jump SDE driven by frozen atoms.  Layer bounds
/// are raised on demand; exceeding params.max_layer throws LocalizationError.
SamplePath simulate_cbdi_sde(const BranchingMechanism& mech, const LevyMeasure& nu, const DependentRates& rates,
                             double y0, const SchemeParams& params, DriverAtoms& atoms);

/// Test functions: e^{-lambda x}, or p(x) e^{-x} with p given by coefficients.
struct TestFunction {
  enum class Kind { Exponential, DampedPolynomial };
  Kind kind = Kind::Exponential;
  double lambda = 1.0;
  std::vector<double> coeffs;

  static TestFunction exponential(double lambda) { return {Kind::Exponential, lambda, {}}; }
  static TestFunction damped_polynomial(std::vector<double> c) { return {Kind::DampedPolynomial, 1.0, std::move(c)}; }

  double value(double x) const;
  double d1(double x) const;
  double d2(double x) const;
};

/// Lf(x) = c x f'' - b x f' + x int [f(x+z) - f(x) - z f'(x)] m(dz)
///         + beta(x) f' + int [f(x+z) - f(x)] q(x,z) nu(dz), term by term.
double generator_eval(const BranchingMechanism& mech, const LevyMeasure& nu, const DependentRates& rates,
                      const TestFunction& f, double x);

/// Closed form of L e^{-lambda x} = e^{-lambda x}[x phi(lambda) - beta(x) lambda - q_state(x) I(lambda)]
/// with I(lambda) = int (1 - e^{-lambda z}) q_size(z) nu(dz) precomputed.
class ExponentialGenerator {
 public:
  ExponentialGenerator(const BranchingMechanism& mech, const LevyMeasure& nu, const DependentRates& rates,
                       double lambda);
  double operator()(double x) const;

 private:
  double lambda_, phi_, imm_;
  DependentRates rates_;
};

struct ResidualCheckpoint {
  double t = 0.0;
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t paths = 0;
  bool passed = false;
};

struct ResidualReport {
  double gate = 3.0;
  std::vector<ResidualCheckpoint> checkpoints;
  bool passed() const;
};

/// Streams paths into R(t) = f(Y_t) - f(Y_0) - sum_{t_i < t} Lf(Y_{t_i}) dt.
class MartingaleAccumulator {
 public:
  MartingaleAccumulator(std::function<double(double)> f, std::function<double(double)> Lf,
                        std::vector<double> checkpoints);
  void add(const SamplePath& path);
  void merge(const MartingaleAccumulator& other);
  ResidualReport report(double gate = 3.0) const;

 private:
  std::function<double(double)> f_, Lf_;
  std::vector<double> checkpoints_;
  std::vector<RunningStats> stats_;
};

/// Checkpoints default to T/4, T/2, 3T/4, T of the first path.
ResidualReport martingale_residual(const std::vector<SamplePath>& paths, const TestFunction& f,
                                   const BranchingMechanism& mech, const LevyMeasure& nu,
                                   const DependentRates& rates, std::vector<double> checkpoints = {});

/// CSV with header `# cbdi-path v1` then t,value,jump_flag,origin.
void write_path_csv(std::ostream& os, const SamplePath& path);

}  // namespace cbdi
