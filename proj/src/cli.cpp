#include "cbdi/cli.hpp"

#include <yaml-cpp/yaml.h>

#include <CLI11.hpp>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "cbdi/cumulant.hpp"
#include "cbdi/errors.hpp"
#include "cbdi/path_construction.hpp"

namespace cbdi {

namespace {

namespace fs = std::filesystem;

// Shortest round-trip text for a double; ".inf" so YAML reads it back.
std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? ".inf" : "-.inf";
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

YAML::Node parse_config_text(const std::string& text, const std::string& source);
RunConfig load_config(const YAML::Node& root, const std::string& source);

// ---------------------------------------------------------------- config --

struct Loader {
  std::string source;

  [[noreturn]] void fail(const YAML::Node& at, const std::string& msg) const { fail(at.Mark(), msg); }

  [[noreturn]] void fail(const YAML::Mark& m, const std::string& msg) const {
    std::ostringstream os;
    if (m.is_null())
      os << "command line: " << msg;
    else
      os << source << ":" << m.line + 1 << ":" << m.column + 1 << ": " << msg;
    throw ConfigError(os.str());
  }

  // Visits every key of a map block, rejecting the ones not listed.
  void each(const YAML::Node& block, const std::string& where, const std::vector<std::string>& allowed,
            const std::function<void(const std::string&, const YAML::Node&)>& visit) const {
    if (!block.IsMap()) fail(block, "'" + where + "' must be a mapping");
    for (auto it = block.begin(); it != block.end(); ++it) {
      std::string key = it->first.as<std::string>();
      if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
        std::string list;
        for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
        fail(it->first, "unknown key '" + key + "' in '" + where + "' (expected one of: " + list + ")");
      }
      visit(key, it->second);
    }
  }

  std::string text(const YAML::Node& n, const std::string& what) const {
    if (!n.IsScalar()) fail(n, what + " must be a scalar");
    return n.Scalar();
  }

  double real(const YAML::Node& n, const std::string& what) const {
    if (!n.IsScalar()) fail(n, what + " must be a number");
    try {
      return n.as<double>();
    } catch (const YAML::Exception&) {
      fail(n, what + ": '" + n.Scalar() + "' is not a number");
    }
  }

  double positive(const YAML::Node& n, const std::string& what) const {
    double v = real(n, what);
    if (!(v > 0.0)) fail(n, what + " must be > 0, got " + n.Scalar());
    return v;
  }

  double nonneg(const YAML::Node& n, const std::string& what) const {
    double v = real(n, what);
    if (!(v >= 0.0)) fail(n, what + " must be >= 0, got " + n.Scalar());
    return v;
  }

  std::uint64_t count(const YAML::Node& n, const std::string& what, std::uint64_t min) const {
    std::string s = text(n, what);
    std::uint64_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
      fail(n, what + ": '" + s + "' is not a non-negative integer");
    if (v < min) fail(n, what + " must be >= " + std::to_string(min));
    return v;
  }

  // "zero" | "atom:z[:w]" | "exp:mass:rate" | "stable:scale:alpha[:lower[:upper]]", or a mapping.
  LevyMeasure measure(const YAML::Node& n, const std::string& what) const {
    try {
      if (n.IsScalar()) return measure_from_string(n, what);
      std::string type;
      std::map<std::string, YAML::Node> f;
      each(n, what, {"type", "atoms", "z", "weight", "mass", "rate", "scale", "alpha", "lower", "upper"},
           [&](const std::string& k, const YAML::Node& v) {
             if (k == "type")
               type = text(v, what + ".type");
             else
               f[k] = v;
           });
      auto get = [&](const char* k, std::optional<double> fallback = std::nullopt) {
        auto it = f.find(k);
        if (it == f.end()) {
          if (fallback) return *fallback;
          fail(n, what + ": missing '" + k + "' for type " + type);
        }
        return real(it->second, what + "." + k);
      };
      if (type == "zero") return LevyMeasure::zero();
      if (type == "atomic") {
        if (f.count("atoms")) {
          const YAML::Node& list = f["atoms"];
          if (!list.IsSequence()) fail(list, what + ".atoms must be a list of [z, weight] pairs");
          std::vector<Atom> atoms;
          for (const auto& pair : list) {
            if (!pair.IsSequence() || pair.size() != 2) fail(pair, what + ".atoms entries are [z, weight]");
            atoms.push_back({positive(pair[0], what + " atom z"), positive(pair[1], what + " atom weight")});
          }
          return LevyMeasure::atomic(std::move(atoms));
        }
        return LevyMeasure::unit_atom(get("z"), get("weight", 1.0));
      }
      if (type == "exponential") return LevyMeasure::exponential(get("mass"), get("rate"));
      if (type == "stable") return LevyMeasure::stable(get("scale"), get("alpha"), get("lower", 0.0), get("upper", kInf));
      fail(n, what + ": unknown measure type '" + type + "' (zero, atomic, exponential, stable)");
    } catch (const std::invalid_argument& e) {
      fail(n, what + ": " + e.what());
    }
  }

  LevyMeasure measure_from_string(const YAML::Node& n, const std::string& what) const {
    std::vector<std::string> parts;
    std::stringstream ss(n.Scalar());
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    auto arg = [&](std::size_t i) {
      try {
        std::size_t used = 0;
        double v = std::stod(parts.at(i), &used);
        if (used != parts[i].size()) throw std::invalid_argument("trailing text");
        return v;
      } catch (const std::exception&) {
        fail(n, what + ": bad measure '" + n.Scalar() + "'");
      }
    };
    const std::string kind = parts.empty() ? "" : parts[0];
    const std::size_t k = parts.size();
    if (kind == "zero" && k == 1) return LevyMeasure::zero();
    if (kind == "atom" && (k == 2 || k == 3)) return LevyMeasure::unit_atom(arg(1), k == 3 ? arg(2) : 1.0);
    if (kind == "exp" && k == 3) return LevyMeasure::exponential(arg(1), arg(2));
    if (kind == "stable" && k >= 3 && k <= 5)
      return LevyMeasure::stable(arg(1), arg(2), k > 3 ? arg(3) : 0.0, k > 4 ? arg(4) : kInf);
    fail(n, what + ": bad measure '" + n.Scalar() +
                "' (zero | atom:z[:w] | exp:mass:rate | stable:scale:alpha[:lower[:upper]])");
  }

  RatesSpec rates(const YAML::Node& n, const std::string& where, RatesSpec r) const {
    if (n.IsScalar()) {
      r.preset = n.Scalar();
      check_rates_preset(n, where, r.preset);
      return r;
    }
    each(n, where, {"preset", "beta", "gamma"}, [&](const std::string& k, const YAML::Node& v) {
      if (k == "preset") {
        r.preset = text(v, where + ".preset");
        check_rates_preset(v, where, r.preset);
      } else if (k == "beta") {
        r.beta = nonneg(v, where + ".beta");
      } else {
        r.gamma = nonneg(v, where + ".gamma");
      }
    });
    return r;
  }

  void check_rates_preset(const YAML::Node& at, const std::string& where, const std::string& name) const {
    static const std::vector<std::string> names{"auto", "none", "constant", "shifted_branching", "competition"};
    if (std::find(names.begin(), names.end(), name) == names.end())
      fail(at, where + ": unknown rates preset '" + name +
                   "' (auto, none, constant, shifted_branching, competition)");
  }
};

BranchingMechanism mechanism_preset(const std::string& name, bool* ok) {
  *ok = true;
  if (name == "cir") return {0.0, 1.0, LevyMeasure::zero()};
  if (name == "jump") return {1.0, 0.0, LevyMeasure::unit_atom(1.0)};
  if (name == "mixed") return {0.5, 0.5, LevyMeasure::exponential(1.0, 2.0)};
  *ok = false;
  return {};
}

// Mechanism, immigration and rates of a model preset.
bool apply_model_preset(RunConfig& cfg, const std::string& name) {
  const LevyMeasure nu = LevyMeasure::exponential(1.0, 2.0);
  bool ok = true;
  if (name == "cir") {
    cfg.mechanism_preset = "cir";
    cfg.imm = {};
    cfg.rates = {"auto"};
  } else if (name == "cbi") {
    cfg.mechanism_preset = "cir";
    cfg.imm = {1.0, nu};
    cfg.rates = {"auto"};
  } else if (name == "jump") {
    cfg.mechanism_preset = "jump";
    cfg.imm = {};
    cfg.rates = {"auto"};
  } else if (name == "jump_cbi") {
    cfg.mechanism_preset = "jump";
    cfg.imm = {1.0, nu};
    cfg.rates = {"auto"};
  } else if (name == "shifted_branching") {
    cfg.mechanism_preset = "jump";
    cfg.imm = {0.0, nu};
    cfg.rates = {"shifted_branching", 0.2};
  } else if (name == "competition") {
    cfg.mechanism_preset = "jump";
    cfg.imm = {};
    cfg.rates = {"competition", 1.0, 0.5};
  } else {
    return false;
  }
  cfg.preset = name;
  cfg.mech = mechanism_preset(cfg.mechanism_preset, &ok);
  return ok;
}

void emit_measure(YAML::Emitter& e, const LevyMeasure& m) {
  if (m.is_zero()) {
    e << "zero";
    return;
  }
  e << YAML::Flow << YAML::BeginMap;
  std::visit(
      [&](const auto& rep) {
        using T = std::decay_t<decltype(rep)>;
        if constexpr (std::is_same_v<T, AtomicMeasure>) {
          e << YAML::Key << "type" << YAML::Value << "atomic" << YAML::Key << "atoms" << YAML::Value << YAML::BeginSeq;
          for (const auto& a : rep.atoms) e << YAML::BeginSeq << num(a.z) << num(a.weight) << YAML::EndSeq;
          e << YAML::EndSeq;
        } else if constexpr (std::is_same_v<T, ExponentialDensity>) {
          e << YAML::Key << "type" << YAML::Value << "exponential" << YAML::Key << "mass" << YAML::Value
            << num(rep.mass) << YAML::Key << "rate" << YAML::Value << num(rep.rate);
        } else {
          e << YAML::Key << "type" << YAML::Value << "stable" << YAML::Key << "scale" << YAML::Value << num(rep.scale)
            << YAML::Key << "alpha" << YAML::Value << num(rep.alpha) << YAML::Key << "lower" << YAML::Value
            << num(rep.lower) << YAML::Key << "upper" << YAML::Value << num(rep.upper);
        }
      },
      m.representation());
  e << YAML::EndMap;
}

void emit_rates(YAML::Emitter& e, const RatesSpec& r) {
  e << YAML::Flow << YAML::BeginMap << YAML::Key << "preset" << YAML::Value << r.preset << YAML::Key << "beta"
    << YAML::Value << num(r.beta) << YAML::Key << "gamma" << YAML::Value << num(r.gamma) << YAML::EndMap;
}

// ------------------------------------------------------------ subcommands --

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir + "': " + ec.message());
}

std::ofstream open_out(const RunConfig& cfg, const std::string& name) {
  std::ofstream os(fs::path(cfg.out_dir) / name);
  if (!os) throw ConfigError("cannot write '" + (fs::path(cfg.out_dir) / name).string() + "'");
  return os;
}

void record_config(const RunConfig& cfg) {
  auto os = open_out(cfg, "config.yaml");
  write_config(os, cfg);
}

int cmd_simulate(const RunConfig& cfg, std::ostream& out) {
  std::vector<Route> routes;
  if (cfg.route == "sde" || cfg.route == "both") routes.push_back(Route::Sde);
  if (cfg.route == "pathspace" || cfg.route == "both") routes.push_back(Route::PathSpace);

  const McConfig mc = cfg.mc();
  const DependentRates rates = cfg.dependent_rates();
  const LevyMeasure& nu = cfg.imm.nu;
  ensure_dir(cfg.out_dir);
  record_config(cfg);

  std::ostringstream summary_csv, summary_txt;
  summary_csv << "# cbdi-summary v1\nroute,replicate,path_id,Y_T,sup_Y,clamped_fraction\n";
  for (Route route : routes) {
    std::ostringstream paths;
    paths << "# cbdi-paths v1\nreplicate,t,Y\n";
    RunningStats yT, sup;
    constexpr std::size_t kChunk = 512;
    for (std::size_t start = 0; start < cfg.replicates; start += kChunk) {
      std::size_t len = std::min(kChunk, cfg.replicates - start);
      auto batch = parallel_map(len, cfg.jobs, [&](std::size_t i) {
        return simulate_route(route, cfg.mech, nu, rates, cfg.x0, cfg.T, mc, mc.path_offset + start + i);
      });
      for (std::size_t i = 0; i < len; ++i) {
        const SamplePath& p = batch[i];
        const std::size_t r = start + i;
        double s = *std::max_element(p.values.begin(), p.values.end());
        yT.add(p.values.back());
        sup.add(s);
        summary_csv << to_string(route) << "," << r << "," << p.path_id << "," << num(p.values.back()) << ","
                    << num(s) << "," << num(p.clamped_fraction()) << "\n";
        if (r < cfg.max_paths)
          for (std::size_t k = 0; k < p.values.size(); ++k) paths << r << "," << num(p.time(k)) << "," << num(p.values[k]) << "\n";
      }
    }
    if (cfg.write_csv) open_out(cfg, std::string("paths_") + to_string(route) + ".csv") << paths.str();
    summary_txt << "[" << to_string(route) << "]\n"
                << "replicates = " << yT.count() << "\n"
                << "mean_Y_T = " << num(yT.mean()) << "\n"
                << "std_error_Y_T = " << num(yT.std_error()) << "\n"
                << "mean_sup_Y = " << num(sup.mean()) << "\n\n";
  }

  if (std::find(routes.begin(), routes.end(), Route::PathSpace) != routes.end() && cfg.write_csv) {
    ConstructionParams cp;
    cp.T = cfg.T;
    cp.dt = cfg.dt;
    cp.x0 = cfg.x0;
    cp.seed = cfg.seed;
    cp.path_id = mc.path_offset;
    cp.eps = cfg.eps;
    if (cfg.custom_bounds) cp.bounds = cfg.bounds;
    ConstructionState st(cfg.mech, nu, cp);
    auto rep = picard_solve(st, rates, cfg.picard);
    auto os = open_out(cfg, "decomposition.csv");
    write_decomposition_csv(os, rep.field);
  }

  if (routes.size() == 2) {
    // the same entries the validation suite reports for this model
    ValidationReport cross;
    cross.add(check_cross_route(cfg.mech, nu, rates, cfg.x0, cfg.T, cfg.lambda, mc, rates.name));
    std::ostringstream table;
    table << "# cbdi-cross-route v1\nstatistic,sde,pathspace,combined_std_error,bias_bound,tolerance,passed\n";
    for (const auto& c : cross.checks)
      table << c.name << "," << num(c.target) << "," << num(c.estimate) << "," << num(c.std_error) << ","
            << num(c.bias_bound) << "," << num(c.tolerance) << "," << (c.passed ? "true" : "false") << "\n";
    if (cfg.write_csv) open_out(cfg, "cross_route.csv") << table.str();
    summary_txt << "[cross_route]\n";
    for (const auto& c : cross.checks)
      summary_txt << c.name << " = " << (c.supported ? (c.passed ? "pass" : "fail") : "unsupported") << "\n";
    summary_txt << "\n";
    out << table.str();
  }
  if (cfg.write_csv) open_out(cfg, "summary.csv") << summary_csv.str();
  if (cfg.write_text) open_out(cfg, "summary.txt") << summary_txt.str();
  out << summary_txt.str();
  return kExitOk;
}

int cmd_laplace(const RunConfig& cfg, std::ostream& out) {
  CumulantSolution sol(cfg.mech);
  const double x = cfg.lap_x, t = cfg.lap_t, lambda = cfg.lap_lambda;
  const bool immigration = cfg.imm.beta0 > 0.0 || !cfg.imm.nu.is_zero();
  std::ostringstream os;
  os << std::setprecision(12);
  os << "model = " << (immigration ? "cbi" : "cb") << "\n"
     << "mechanism = " << cfg.mech.describe() << "\n"
     << "immigration = beta=" << cfg.imm.beta0 << " nu=" << cfg.imm.nu.describe() << "\n"
     << "x = " << x << "\nt = " << t << "\nlambda = " << lambda << "\n"
     << "v_t = " << sol.v(t, lambda) << "\n"
     << "laplace_cb = " << laplace_cb(sol, x, t, lambda) << "\n"
     << "laplace = " << (immigration ? laplace_cbi(sol, cfg.imm, x, t, lambda) : laplace_cb(sol, x, t, lambda)) << "\n"
     << "mean_cb = " << mean_first_moment(cfg.mech, x, t) << "\n"
     << "tolerance = " << sol.tolerance() << "\n";
  auto rates = cfg.dependent_rates();
  if (!rates.is_constant())
    os << "note = rates '" << rates.name << "' are state-dependent; the values above use the classical immigration only\n";
  ensure_dir(cfg.out_dir);
  record_config(cfg);
  if (cfg.write_text) open_out(cfg, "laplace.txt") << os.str();
  out << os.str();
  return kExitOk;
}

int cmd_validate(const RunConfig& cfg, std::ostream& out) {
  ensure_dir(cfg.out_dir);
  record_config(cfg);
  ValidationReport rep = run_suite(cfg.suite());
  if (cfg.write_text) {
    auto os = open_out(cfg, "report.txt");
    write_report_text(os, rep);
  }
  if (cfg.write_csv) {
    auto os = open_out(cfg, "report.csv");
    write_report_csv(os, rep);
  }
  for (const auto& c : rep.checks)
    out << (c.supported ? (c.passed ? "PASS " : "FAIL ") : "SKIP ") << c.name << "  estimate=" << num(c.estimate)
        << " target=" << num(c.target) << " tol=" << num(c.tolerance) << (c.supported ? "" : "  (" + c.note + ")")
        << "\n";
  out << "passed " << rep.passed_count() << "/" << rep.supported() << " supported checks; suite "
      << (rep.passed() ? "PASSED" : "FAILED") << "\n";
  return rep.passed() ? kExitOk : kExitCheckFailed;
}

int cmd_compare(const RunConfig& cfg, std::ostream& out) {
  const DependentRates lower = cfg.lower.resolve(cfg.imm);
  const DependentRates upper = cfg.upper.resolve(cfg.imm);
  const LevyMeasure& nu = cfg.imm.nu;
  audit_comparison(lower, upper, nu, cfg.picard.level0);  // refuse before simulating
  ensure_dir(cfg.out_dir);
  record_config(cfg);

  struct Row {
    double gap;
    std::size_t violations;
    int iterations;
    bool converged;
  };
  const McConfig mc = cfg.mc();
  std::ostringstream csv;
  csv << "# cbdi-compare v1\nreplicate,max_gap,violations,iterations,converged\n";
  std::size_t violations = 0, unconverged = 0;
  double gap = 0.0;
  constexpr std::size_t kChunk = 512;
  for (std::size_t start = 0; start < cfg.replicates; start += kChunk) {
    std::size_t len = std::min(kChunk, cfg.replicates - start);
    auto rows = parallel_map(len, cfg.jobs, [&](std::size_t i) {
      ConstructionParams cp;
      cp.T = cfg.T;
      cp.dt = cfg.dt;
      cp.x0 = cfg.x0;
      cp.seed = cfg.seed;
      cp.path_id = mc.path_offset + start + i;
      cp.eps = cfg.eps;
      if (cfg.custom_bounds) cp.bounds = cfg.bounds;
      ConstructionState st(cfg.mech, nu, cp);
      auto rep = coupled_compare(st, lower, upper, cfg.picard);
      return Row{rep.max_gap, rep.violations, rep.iterations, rep.converged};
    });
    for (std::size_t i = 0; i < len; ++i) {
      const Row& r = rows[i];
      violations += r.violations;
      unconverged += r.converged ? 0 : 1;
      gap = std::max(gap, r.gap);
      csv << start + i << "," << num(r.gap) << "," << r.violations << "," << r.iterations << ","
          << (r.converged ? "true" : "false") << "\n";
    }
  }
  if (cfg.write_csv) open_out(cfg, "compare.csv") << csv.str();
  std::ostringstream txt;
  txt << "lower = " << lower.name << "\nupper = " << upper.name << "\nreplicates = " << cfg.replicates
      << "\nmax_gap = " << num(gap) << "\nviolations = " << violations << "\nunconverged = " << unconverged
      << "\nordering = " << (violations == 0 && unconverged == 0 ? "holds" : "violated") << "\n";
  if (cfg.write_text) open_out(cfg, "compare.txt") << txt.str();
  out << txt.str();
  return violations == 0 && unconverged == 0 ? kExitOk : kExitCheckFailed;
}

// --------------------------------------------------------- command line --

// "name" -> {preset: name};  "k=v,k=v" -> {k: v, ...}
void merge_kv(YAML::Node block, const std::string& spec, const std::string& flag) {
  if (!block.IsMap()) {
    YAML::Node old = YAML::Clone(block);
    block = YAML::Node(YAML::NodeType::Map);
    if (old.IsScalar()) block["preset"] = old.Scalar();
  }
  if (spec.find('=') == std::string::npos) {
    block["preset"] = spec;
    return;
  }
  std::stringstream ss(spec);
  for (std::string item; std::getline(ss, item, ',');) {
    auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("command line: " + flag + " expects key=value[,key=value...], got '" + item + "'");
    block[item.substr(0, eq)] = item.substr(eq + 1);
  }
}

YAML::Node child(YAML::Node root, const std::string& key) {
  if (!root[key] || root[key].IsNull()) root[key] = YAML::Node(YAML::NodeType::Map);
  return root[key];
}

struct Flags {
  std::string config, preset, mechanism, immigration, rates, lower, upper, out, route, checks;
  std::optional<std::uint64_t> seed, replicates;
  std::optional<unsigned> jobs;
  std::optional<double> dt, x, t, lambda;
  bool dry_run = false;
};

YAML::Node merged_tree(const Flags& f) {
  YAML::Node root(YAML::NodeType::Map);
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    if (!in) throw ConfigError("cannot open config file '" + f.config + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    root = parse_config_text(ss.str(), f.config);
    if (root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
    if (!root.IsMap()) throw ConfigError(f.config + ": top level must be a mapping");
  }
  auto set = [&](const char* block, const char* key, const std::string& v) { child(root, block)[key] = v; };
  if (!f.preset.empty()) root["preset"] = f.preset;
  if (!f.mechanism.empty()) merge_kv(child(root, "mechanism"), f.mechanism, "--mechanism");
  if (!f.immigration.empty()) merge_kv(child(root, "immigration"), f.immigration, "--immigration");
  if (!f.rates.empty()) merge_kv(child(root, "rates"), f.rates, "--rates");
  if (!f.lower.empty()) merge_kv(child(child(root, "compare"), "lower"), f.lower, "--lower");
  if (!f.upper.empty()) merge_kv(child(child(root, "compare"), "upper"), f.upper, "--upper");
  if (!f.out.empty()) set("output", "directory", f.out);
  if (!f.route.empty()) set("simulate", "route", f.route);
  if (f.seed) set("mc", "seed", std::to_string(*f.seed));
  if (f.replicates) set("mc", "replicates", std::to_string(*f.replicates));
  if (f.jobs) set("mc", "jobs", std::to_string(*f.jobs));
  if (f.dt) set("numeric", "dt", num(*f.dt));
  if (f.x) set("laplace", "x", num(*f.x));
  if (f.t) set("laplace", "t", num(*f.t));
  if (f.lambda) set("laplace", "lambda", num(*f.lambda));
  if (!f.checks.empty()) {
    YAML::Node list(YAML::NodeType::Sequence);
    std::stringstream ss(f.checks);
    for (std::string c; std::getline(ss, c, ',');) list.push_back(c);
    child(root, "validate")["checks"] = list;
  }
  return root;
}

}  // namespace

// ----------------------------------------------------------------- public --

DependentRates RatesSpec::resolve(const ImmigrationMechanism& imm) const {
  if (preset == "auto") {
    if (imm.beta0 == 0.0 && imm.nu.is_zero()) return DependentRates::none();
    return DependentRates::constant(imm.beta0, imm.nu);
  }
  if (preset == "none") return DependentRates::none();
  if (preset == "constant") return DependentRates::constant(beta, imm.nu);
  if (preset == "shifted_branching") return DependentRates::shifted_branching(beta, imm.nu);
  if (preset == "competition") return DependentRates::competition(beta, gamma);
  throw ConfigError("unknown rates preset '" + preset + "'");
}

McConfig RunConfig::mc() const {
  McConfig m;
  m.replicates = replicates;
  m.seed = seed;
  m.dt = dt;
  m.jobs = jobs;
  m.eps = eps;
  m.picard = picard;
  if (custom_bounds) m.bounds = bounds;
  return m;
}

SuiteConfig RunConfig::suite() const {
  SuiteConfig s;
  s.mech = mech;
  s.imm = imm;
  s.rates = dependent_rates();
  s.x0 = x0;
  s.t = T;
  s.lambda = lambda;
  s.lambdas = lambdas;
  s.mc = mc();
  s.checks = checks;
  return s;
}

std::vector<std::string> model_preset_names() {
  return {"cir", "cbi", "jump", "jump_cbi", "shifted_branching", "competition"};
}

namespace {

YAML::Node parse_config_text(const std::string& text, const std::string& source) {
  try {
    return YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    std::ostringstream os;
    os << source << ":" << e.mark.line + 1 << ":" << e.mark.column + 1 << ": " << e.msg;
    throw ConfigError(os.str());
  }
}

RunConfig load_config(const YAML::Node& root, const std::string& source) {
  Loader L{source};
  RunConfig cfg;
  if (!root || root.IsNull()) return cfg;

  // the preset goes first so that every block can refine it
  if (root.IsMap() && root["preset"]) {
    const YAML::Node& p = root["preset"];
    std::string name = L.text(p, "preset");
    if (!apply_model_preset(cfg, name)) {
      std::string list;
      for (const auto& n : model_preset_names()) list += (list.empty() ? "" : ", ") + n;
      L.fail(p, "unknown preset '" + name + "' (" + list + ")");
    }
  }

  L.each(root, "config",
         {"preset", "mechanism", "immigration", "rates", "numeric", "mc", "output", "simulate", "laplace", "validate",
          "compare"},
         [&](const std::string& key, const YAML::Node& n) {
           if (key == "preset") return;
           if (key == "mechanism") {
             YAML::Node block = n;
             if (n.IsScalar()) {
               block = YAML::Node(YAML::NodeType::Map);
               block["preset"] = n;
             }
             // preset before the explicit fields, whatever the key order
             if (block["preset"]) {
               bool ok = false;
               std::string name = L.text(block["preset"], "mechanism.preset");
               BranchingMechanism m = mechanism_preset(name, &ok);
               if (!ok) L.fail(block["preset"], "unknown mechanism preset '" + name + "' (cir, jump, mixed)");
               cfg.mech = m;
               cfg.mechanism_preset = name;
             }
             L.each(block, "mechanism", {"preset", "b", "c", "m"}, [&](const std::string& k, const YAML::Node& v) {
               if (k == "preset") return;
               if (k == "b") cfg.mech.b = L.real(v, "mechanism.b");
               if (k == "c") cfg.mech.c = L.nonneg(v, "mechanism.c");
               if (k == "m") cfg.mech.m = L.measure(v, "mechanism.m");
               cfg.mechanism_preset = "custom";
             });
           } else if (key == "immigration") {
             YAML::Node block = n;
             if (n.IsScalar()) {
               block = YAML::Node(YAML::NodeType::Map);
               block["preset"] = n;
             }
             if (block["preset"]) {
               std::string name = L.text(block["preset"], "immigration.preset");
               if (name == "none")
                 cfg.imm = {};
               else if (name == "cbi")
                 cfg.imm = {1.0, LevyMeasure::exponential(1.0, 2.0)};
               else
                 L.fail(block["preset"], "unknown immigration preset '" + name + "' (none, cbi)");
             }
             L.each(block, "immigration", {"preset", "beta", "nu"}, [&](const std::string& k, const YAML::Node& v) {
               if (k == "beta") cfg.imm.beta0 = L.nonneg(v, "immigration.beta");
               if (k == "nu") cfg.imm.nu = L.measure(v, "immigration.nu");
             });
           } else if (key == "rates") {
             cfg.rates = L.rates(n, "rates", cfg.rates);
           } else if (key == "numeric") {
             L.each(n, "numeric",
                    {"T", "dt", "x0", "tol", "max_iter", "level0", "max_level", "eps_m", "eps_nu", "eps_0", "bounds"},
                    [&](const std::string& k, const YAML::Node& v) {
                      const std::string w = "numeric." + k;
                      if (k == "T") cfg.T = L.positive(v, w);
                      if (k == "dt") cfg.dt = L.positive(v, w);
                      if (k == "x0") cfg.x0 = L.nonneg(v, w);
                      if (k == "tol") cfg.picard.tol = L.nonneg(v, w);
                      if (k == "max_iter") cfg.picard.max_iter = static_cast<int>(L.count(v, w, 1));
                      if (k == "level0") cfg.picard.level0 = L.positive(v, w);
                      if (k == "max_level") cfg.picard.max_level = L.positive(v, w);
                      if (k == "eps_m") cfg.eps.eps_m = L.positive(v, w);
                      if (k == "eps_nu") cfg.eps.eps_nu = L.positive(v, w);
                      if (k == "eps_0") cfg.eps.eps_0 = L.positive(v, w);
                      if (k == "bounds") {
                        cfg.custom_bounds = true;
                        L.each(v, w, {"branching", "immigration", "excursion"},
                               [&](const std::string& b, const YAML::Node& bv) {
                                 if (b == "branching") cfg.bounds.branching = L.positive(bv, w + ".branching");
                                 if (b == "immigration") cfg.bounds.immigration = L.nonneg(bv, w + ".immigration");
                                 if (b == "excursion") cfg.bounds.excursion = L.nonneg(bv, w + ".excursion");
                               });
                      }
                    });
           } else if (key == "mc") {
             L.each(n, "mc", {"replicates", "seed", "jobs"}, [&](const std::string& k, const YAML::Node& v) {
               if (k == "replicates") cfg.replicates = L.count(v, "mc.replicates", 1);
               if (k == "seed") cfg.seed = L.count(v, "mc.seed", 0);
               if (k == "jobs") cfg.jobs = static_cast<unsigned>(L.count(v, "mc.jobs", 1));
             });
           } else if (key == "output") {
             L.each(n, "output", {"directory", "formats", "max_paths"}, [&](const std::string& k, const YAML::Node& v) {
               if (k == "directory") cfg.out_dir = L.text(v, "output.directory");
               if (k == "max_paths") cfg.max_paths = L.count(v, "output.max_paths", 0);
               if (k == "formats") {
                 if (!v.IsSequence()) L.fail(v, "output.formats must be a list (csv, text)");
                 cfg.write_csv = cfg.write_text = false;
                 for (const auto& f : v) {
                   std::string s = L.text(f, "output.formats entry");
                   if (s == "csv")
                     cfg.write_csv = true;
                   else if (s == "text")
                     cfg.write_text = true;
                   else
                     L.fail(f, "unknown output format '" + s + "' (csv, text)");
                 }
               }
             });
           } else if (key == "simulate") {
             L.each(n, "simulate", {"route"}, [&](const std::string&, const YAML::Node& v) {
               cfg.route = L.text(v, "simulate.route");
               if (cfg.route != "sde" && cfg.route != "pathspace" && cfg.route != "both")
                 L.fail(v, "unknown route '" + cfg.route + "' (sde, pathspace, both)");
             });
           } else if (key == "laplace") {
             L.each(n, "laplace", {"x", "t", "lambda"}, [&](const std::string& k, const YAML::Node& v) {
               double val = L.nonneg(v, "laplace." + k);
               (k == "x" ? cfg.lap_x : k == "t" ? cfg.lap_t : cfg.lap_lambda) = val;
             });
           } else if (key == "validate") {
             L.each(n, "validate", {"checks", "lambda", "lambdas"}, [&](const std::string& k, const YAML::Node& v) {
               if (k == "lambda") cfg.lambda = L.nonneg(v, "validate.lambda");
               if (k == "checks" || k == "lambdas") {
                 if (!v.IsSequence()) L.fail(v, "validate." + k + " must be a list");
                 if (k == "checks") cfg.checks.clear();
                 if (k == "lambdas") cfg.lambdas.clear();
               }
               if (k == "checks") {
                 auto known = SuiteConfig::all_check_names();
                 for (const auto& c : v) {
                   std::string s = L.text(c, "validate.checks entry");
                   if (std::find(known.begin(), known.end(), s) == known.end()) L.fail(c, "unknown check '" + s + "'");
                   cfg.checks.push_back(s);
                 }
               }
               if (k == "lambdas")
                 for (const auto& l : v) cfg.lambdas.push_back(L.nonneg(l, "validate.lambdas entry"));
             });
           } else if (key == "compare") {
             L.each(n, "compare", {"lower", "upper"}, [&](const std::string& k, const YAML::Node& v) {
               if (k == "lower") cfg.lower = L.rates(v, "compare.lower", cfg.lower);
               if (k == "upper") cfg.upper = L.rates(v, "compare.upper", cfg.upper);
             });
           }
         });

  if (cfg.dt > cfg.T) throw ConfigError(source + ": numeric.dt (" + num(cfg.dt) + ") exceeds numeric.T (" + num(cfg.T) + ")");
  return cfg;
}

}  // namespace

RunConfig load_config_text(const std::string& text, const std::string& source) {
  return load_config(parse_config_text(text, source), source);
}

void write_config(std::ostream& os, const RunConfig& cfg) {
  YAML::Emitter e;
  e << YAML::BeginMap;
  e << YAML::Key << "preset" << YAML::Value << cfg.preset;
  e << YAML::Key << "mechanism" << YAML::Value << YAML::BeginMap << YAML::Key << "b" << YAML::Value << num(cfg.mech.b)
    << YAML::Key << "c" << YAML::Value << num(cfg.mech.c) << YAML::Key << "m" << YAML::Value;
  emit_measure(e, cfg.mech.m);
  e << YAML::EndMap;
  e << YAML::Key << "immigration" << YAML::Value << YAML::BeginMap << YAML::Key << "beta" << YAML::Value
    << num(cfg.imm.beta0) << YAML::Key << "nu" << YAML::Value;
  emit_measure(e, cfg.imm.nu);
  e << YAML::EndMap;
  e << YAML::Key << "rates" << YAML::Value;
  emit_rates(e, cfg.rates);

  e << YAML::Key << "numeric" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "T" << YAML::Value << num(cfg.T) << YAML::Key << "dt" << YAML::Value << num(cfg.dt) << YAML::Key
    << "x0" << YAML::Value << num(cfg.x0) << YAML::Key << "tol" << YAML::Value << num(cfg.picard.tol) << YAML::Key
    << "max_iter" << YAML::Value << cfg.picard.max_iter << YAML::Key << "level0" << YAML::Value
    << num(cfg.picard.level0) << YAML::Key << "max_level" << YAML::Value << num(cfg.picard.max_level) << YAML::Key
    << "eps_m" << YAML::Value << num(cfg.eps.eps_m) << YAML::Key << "eps_nu" << YAML::Value << num(cfg.eps.eps_nu)
    << YAML::Key << "eps_0" << YAML::Value << num(cfg.eps.eps_0);
  if (cfg.custom_bounds)
    e << YAML::Key << "bounds" << YAML::Value << YAML::Flow << YAML::BeginMap << YAML::Key << "branching"
      << YAML::Value << num(cfg.bounds.branching) << YAML::Key << "immigration" << YAML::Value
      << num(cfg.bounds.immigration) << YAML::Key << "excursion" << YAML::Value << num(cfg.bounds.excursion)
      << YAML::EndMap;
  e << YAML::EndMap;

  e << YAML::Key << "mc" << YAML::Value << YAML::BeginMap << YAML::Key << "replicates" << YAML::Value
    << cfg.replicates << YAML::Key << "seed" << YAML::Value << cfg.seed << YAML::Key << "jobs" << YAML::Value
    << cfg.jobs << YAML::EndMap;

  e << YAML::Key << "output" << YAML::Value << YAML::BeginMap << YAML::Key << "directory" << YAML::Value
    << cfg.out_dir << YAML::Key << "formats" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  if (cfg.write_csv) e << "csv";
  if (cfg.write_text) e << "text";
  e << YAML::EndSeq << YAML::Key << "max_paths" << YAML::Value << cfg.max_paths << YAML::EndMap;

  e << YAML::Key << "simulate" << YAML::Value << YAML::BeginMap << YAML::Key << "route" << YAML::Value << cfg.route
    << YAML::EndMap;
  e << YAML::Key << "laplace" << YAML::Value << YAML::BeginMap << YAML::Key << "x" << YAML::Value << num(cfg.lap_x)
    << YAML::Key << "t" << YAML::Value << num(cfg.lap_t) << YAML::Key << "lambda" << YAML::Value
    << num(cfg.lap_lambda) << YAML::EndMap;

  e << YAML::Key << "validate" << YAML::Value << YAML::BeginMap << YAML::Key << "checks" << YAML::Value << YAML::Flow
    << YAML::BeginSeq;
  for (const auto& c : cfg.checks) e << c;
  e << YAML::EndSeq << YAML::Key << "lambda" << YAML::Value << num(cfg.lambda) << YAML::Key << "lambdas"
    << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (double l : cfg.lambdas) e << num(l);
  e << YAML::EndSeq << YAML::EndMap;

  e << YAML::Key << "compare" << YAML::Value << YAML::BeginMap << YAML::Key << "lower" << YAML::Value;
  emit_rates(e, cfg.lower);
  e << YAML::Key << "upper" << YAML::Value;
  emit_rates(e, cfg.upper);
  e << YAML::EndMap;

  e << YAML::EndMap;
  os << e.c_str() << "\n";
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sample paths of branching processes with dependent immigration, and their analytic checks", "cbdi"};
  app.require_subcommand(1);
  Flags f;

  auto common = [&f](CLI::App* sub) {
    sub->add_option("--config", f.config, "YAML or JSON config file");
    sub->add_option("--preset", f.preset, "model preset: cir, cbi, jump, jump_cbi, shifted_branching, competition");
    sub->add_option("--mechanism", f.mechanism, "mechanism preset or b=..,c=..,m=<measure>");
    sub->add_option("--immigration", f.immigration, "none | cbi | beta=..,nu=<measure>");
    sub->add_option("--rates", f.rates, "rates preset or preset=..,beta=..,gamma=..");
    sub->add_option("--seed", f.seed, "master seed");
    sub->add_option("--replicates", f.replicates, "Monte Carlo replicates");
    sub->add_option("--jobs", f.jobs, "worker threads");
    sub->add_option("--dt", f.dt, "grid step");
    sub->add_option("--out", f.out, "output directory");
    sub->add_flag("--dry-run", f.dry_run, "print the resolved config and exit");
  };
  CLI::App* simulate = app.add_subcommand("simulate", "simulate sample paths by one or both routes");
  common(simulate);
  simulate->add_option("--route", f.route, "sde, pathspace or both");
  CLI::App* laplace = app.add_subcommand("laplace", "print analytic Laplace functionals");
  common(laplace);
  laplace->add_option("--x", f.x, "initial mass");
  laplace->add_option("--t", f.t, "time");
  laplace->add_option("--lambda", f.lambda, "Laplace argument");
  CLI::App* validate = app.add_subcommand("validate", "run the validation suite");
  common(validate);
  validate->add_option("--checks", f.checks, "comma-separated check names");
  CLI::App* compare = app.add_subcommand("compare", "coupled pathwise comparison of two rate sets");
  common(compare);
  compare->add_option("--lower", f.lower, "rates expected to give the smaller path");
  compare->add_option("--upper", f.upper, "rates expected to give the larger path");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    RunConfig cfg = load_config(merged_tree(f), f.config.empty() ? "config" : f.config);
    if (f.dry_run) {
      write_config(out, cfg);
      return kExitOk;
    }
    if (simulate->parsed()) return cmd_simulate(cfg, out);
    if (laplace->parsed()) return cmd_laplace(cfg, out);
    if (validate->parsed()) return cmd_validate(cfg, out);
    return cmd_compare(cfg, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UnsupportedRegime& e) {
    err << "unsupported regime: " << e.what() << "\n";
    return kExitUnsupported;
  } catch (const HypothesisViolation& e) {
    err << "hypothesis violation: " << e.what() << "\n";
    return kExitHypothesis;
  } catch (const LocalizationError& e) {
    err << "localization error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    err << "invalid argument: " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace cbdi
