#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "cbdi/validation.hpp"

namespace cbdi {

/// A rate family by name plus its parameters; "auto" means the classical
/// CBI rates beta(x) = immigration.beta, q == 1 (or none without immigration).
struct RatesSpec {
  std::string preset = "auto";
  double beta = 0.2;
  double gamma = 0.5;

  DependentRates resolve(const ImmigrationMechanism& imm) const;
};

/// Everything a subcommand needs, after presets, the config file and the
/// command-line overrides have been merged (in that order).
struct RunConfig {
  std::string preset = "cir";

  std::string mechanism_preset = "cir";
  BranchingMechanism mech{0.0, 1.0, LevyMeasure::zero()};
  ImmigrationMechanism imm;
  RatesSpec rates;

  double T = 1.0;
  double dt = 1e-3;
  double x0 = 1.0;
  PicardParams picard;
  Truncations eps;
  bool custom_bounds = false;
  LayerBounds bounds{4.0, 4.0, 4.0};

  std::size_t replicates = 1000;
  std::uint64_t seed = 1;
  unsigned jobs = 1;

  std::string out_dir = "cbdi-out";
  bool write_csv = true;
  bool write_text = true;
  std::size_t max_paths = 100;

  std::string route = "sde";
  double lap_x = 1.0, lap_t = 1.0, lap_lambda = 1.0;
  std::vector<std::string> checks = SuiteConfig::all_check_names();
  double lambda = 1.0;
  std::vector<double> lambdas{0.5, 1.0, 2.0};
  RatesSpec lower{"none"};
  RatesSpec upper{"auto"};

  DependentRates dependent_rates() const { return rates.resolve(imm); }
  McConfig mc() const;
  SuiteConfig suite() const;
};

/// Builds a RunConfig from YAML or JSON text.  Syntax errors, unknown keys,
/// bad values and unknown preset names raise ConfigError as
/// "source:line:column: message".
RunConfig load_config_text(const std::string& text, const std::string& source);

/// The resolved config as YAML that load_config_text reads back unchanged.
void write_config(std::ostream& os, const RunConfig& cfg);

/// Model presets understood by the top-level `preset` key.
std::vector<std::string> model_preset_names();

/// Exit codes of run_cli.
enum ExitCode : int {
  kExitOk = 0,
  kExitCheckFailed = 1,
  kExitUsage = 2,
  kExitUnsupported = 3,
  kExitHypothesis = 4,
  kExitNumeric = 5,
};

/// The cbdi command line: simulate | laplace | validate | compare.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cbdi
