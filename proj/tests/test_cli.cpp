#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cbdi/cli.hpp"
#include "cbdi/errors.hpp"

using namespace cbdi;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

// Scratch directory per test, removed afterwards.
class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("cbdi_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(path(name)) << text;
    return path(name);
  }
  static std::string slurp(const std::string& file) {
    std::ifstream in(file);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }
  // value of "key = v" in key-value output
  static double value(const std::string& text, const std::string& key) {
    auto pos = text.find("\n" + key + " = ");
    if (pos == std::string::npos) pos = text.rfind(key + " = ", 0) == 0 ? 0 : std::string::npos;
    EXPECT_NE(pos, std::string::npos) << key;
    if (pos == std::string::npos) return NAN;
    return std::stod(text.substr(text.find('=', pos) + 1));
  }

  fs::path dir_;
};

RunConfig from_text(const std::string& text) { return load_config_text(text, "cfg.yaml"); }

std::string config_error(const std::string& text) {
  try {
    from_text(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, DefaultsAreCirWithoutImmigration) {
  RunConfig cfg = from_text("");
  EXPECT_EQ(cfg.mech.b, 0.0);
  EXPECT_EQ(cfg.mech.c, 1.0);
  EXPECT_TRUE(cfg.mech.m.is_zero());
  EXPECT_TRUE(cfg.dependent_rates().is_zero());
}

TEST(Config, PresetThenBlockFields) {
  RunConfig cfg = from_text("preset: shifted_branching\nmechanism:\n  b: 2\nrates:\n  beta: 0.4\n");
  EXPECT_EQ(cfg.mech.b, 2.0);
  EXPECT_FALSE(cfg.mech.m.is_zero());
  EXPECT_EQ(cfg.rates.preset, "shifted_branching");
  EXPECT_EQ(cfg.rates.beta, 0.4);
  // a mechanism preset is applied before the explicit fields, whatever the order
  RunConfig m = from_text("mechanism: {c: 0.25, preset: jump}");
  EXPECT_EQ(m.mech.b, 1.0);
  EXPECT_EQ(m.mech.c, 0.25);
}

TEST(Config, MeasureForms) {
  RunConfig a = from_text("immigration: {beta: 1, nu: 'exp:1:2'}");
  RunConfig b = from_text("immigration:\n  beta: 1\n  nu: {type: exponential, mass: 1, rate: 2}\n");
  EXPECT_DOUBLE_EQ(a.imm.psi(1.5), b.imm.psi(1.5));
  RunConfig c = from_text("mechanism: {m: {type: atomic, atoms: [[1, 0.5], [2, 0.25]]}}");
  EXPECT_DOUBLE_EQ(c.mech.m.partial_moment(1, 0.0), 1.0);
}

TEST(Config, JsonIsAccepted) {
  RunConfig cfg = from_text(R"({"preset": "cbi", "mc": {"replicates": 7, "seed": 9}, "numeric": {"dt": 0.01}})");
  EXPECT_EQ(cfg.replicates, 7u);
  EXPECT_EQ(cfg.seed, 9u);
  EXPECT_EQ(cfg.dt, 0.01);
  EXPECT_EQ(cfg.imm.beta0, 1.0);
}

TEST(Config, UnknownKeyNamesItsLine) {
  std::string msg = config_error("mechanism:\n  b: 1\n  cc: 2\n");
  EXPECT_NE(msg.find("cfg.yaml:3:3"), std::string::npos) << msg;
  EXPECT_NE(msg.find("unknown key 'cc'"), std::string::npos) << msg;

  msg = config_error("mc:\n  replicates: 10\nbogus: 1\n");
  EXPECT_NE(msg.find("cfg.yaml:3:1"), std::string::npos) << msg;
}

TEST(Config, BadValuesNameTheirLine) {
  EXPECT_NE(config_error("numeric:\n  dt: -1\n").find("cfg.yaml:2:7: numeric.dt must be > 0"), std::string::npos);
  EXPECT_NE(config_error("mc:\n  replicates: many\n").find("cfg.yaml:2:15"), std::string::npos);
  EXPECT_NE(config_error("preset: nope\n").find("unknown preset 'nope'"), std::string::npos);
  EXPECT_NE(config_error("rates: {preset: fancy}\n").find("unknown rates preset"), std::string::npos);
  EXPECT_NE(config_error("mechanism: {m: 'exp:1'}\n").find("bad measure"), std::string::npos);
  EXPECT_NE(config_error("mechanism: {m: 'exp:-1:2'}\n").find("cfg.yaml:1:16"), std::string::npos);
  EXPECT_NE(config_error("validate: {checks: [flow, vibes]}\n").find("unknown check 'vibes'"), std::string::npos);
  EXPECT_NE(config_error("numeric: {T: 0.5, dt: 1}\n").find("exceeds"), std::string::npos);
}

TEST(Config, SyntaxErrorNamesItsLine) {
  std::string msg = config_error("mc:\n  seed: 1\n  jobs: [1,\n");
  EXPECT_EQ(msg.rfind("cfg.yaml:", 0), 0u) << msg;
}

TEST(Config, DumpRoundTrips) {
  RunConfig cfg = from_text(
      "preset: competition\nimmigration: {beta: 0.5, nu: 'atom:2:0.5'}\nnumeric: {dt: 0.002, bounds: {branching: 8, "
      "immigration: 2, excursion: 0}}\noutput: {formats: [csv]}\nvalidate: {checks: [flow], lambdas: [3]}\n");
  std::ostringstream a, b;
  write_config(a, cfg);
  write_config(b, from_text(a.str()));
  EXPECT_EQ(a.str(), b.str());
  EXPECT_NE(a.str().find("dt: 0.002"), std::string::npos) << a.str();
}

TEST_F(Cli, LaplaceExamples) {
  auto r = cli({"laplace", "--out", path("o")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NEAR(value(r.out, "laplace"), 0.606531, 5e-7);
  EXPECT_DOUBLE_EQ(value(cli({"laplace", "--lambda", "0", "--out", path("o")}).out, "laplace"), 1.0);
  EXPECT_NEAR(value(cli({"laplace", "--immigration", "beta=1", "--out", path("o")}).out, "laplace"), 0.303265, 5e-7);
  EXPECT_TRUE(fs::exists(path("o/laplace.txt")));
}

TEST_F(Cli, DryRunPrintsResolvedConfigOnly) {
  auto r = cli({"simulate", "--preset", "jump", "--seed", "42", "--dry-run", "--out", path("never")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("seed: 42"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("preset: jump"), std::string::npos);
  EXPECT_FALSE(fs::exists(path("never")));
  // flags win over the file
  std::string file = write("c.yaml", "mc: {seed: 5, replicates: 3}\n");
  r = cli({"validate", "--config", file, "--seed", "6", "--dry-run"});
  EXPECT_NE(r.out.find("seed: 6"), std::string::npos);
  EXPECT_NE(r.out.find("replicates: 3"), std::string::npos);
}

TEST_F(Cli, ConfigErrorsExitWithUsageCode) {
  std::string file = write("bad.yaml", "mc:\n  seed: 1\n  colour: red\n");
  auto r = cli({"laplace", "--config", file});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find(file + ":3:3: unknown key 'colour'"), std::string::npos) << r.err;
  r = cli({"laplace", "--mechanism", "b=1,zz=2"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("command line: unknown key 'zz'"), std::string::npos) << r.err;
  EXPECT_EQ(cli({"simulate", "--route", "sideways"}).code, kExitUsage);
  EXPECT_EQ(cli({"frobnicate"}).code, kExitUsage);
}

TEST_F(Cli, SimulateWritesVersionedFiles) {
  auto r = cli({"simulate", "--preset", "cir", "--route", "sde", "--replicates", "20", "--dt", "0.01", "--out",
                path("s")});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"config.yaml", "paths_sde.csv", "summary.csv", "summary.txt"})
    EXPECT_TRUE(fs::exists(path(std::string("s/") + f))) << f;
  EXPECT_EQ(slurp(path("s/paths_sde.csv")).rfind("# cbdi-paths v1\nreplicate,t,Y\n", 0), 0u);
  EXPECT_EQ(slurp(path("s/summary.csv")).rfind("# cbdi-summary v1\n", 0), 0u);
}

TEST_F(Cli, PathSpaceNeedsFiniteSlope) {
  auto r = cli({"simulate", "--preset", "cbi", "--route", "pathspace", "--replicates", "2", "--out", path("p")});
  EXPECT_EQ(r.code, kExitUnsupported);
  EXPECT_NE(r.err.find("excursion construction requires φ′(∞)<∞"), std::string::npos) << r.err;
}

TEST_F(Cli, BothRoutesEmitCrossRouteTable) {
  auto r = cli({"simulate", "--preset", "shifted_branching", "--route", "both", "--replicates", "200", "--dt", "0.01",
                "--out", path("b")});
  ASSERT_EQ(r.code, 0) << r.err;
  std::string table = slurp(path("b/cross_route.csv"));
  EXPECT_EQ(table.rfind("# cbdi-cross-route v1\n", 0), 0u);
  EXPECT_NE(table.find("cross_route_mean[shifted_branching]"), std::string::npos);
  EXPECT_NE(table.find("cross_route_laplace[shifted_branching]"), std::string::npos);
  EXPECT_TRUE(fs::exists(path("b/decomposition.csv")));
}

TEST_F(Cli, SameSeedSameBytes) {
  auto run = [&](const std::string& out, const std::string& jobs) {
    return cli({"simulate", "--preset", "shifted_branching", "--route", "both", "--replicates", "100", "--dt", "0.01",
                "--seed", "17", "--jobs", jobs, "--out", path(out)});
  };
  ASSERT_EQ(run("a", "1").code, 0);
  ASSERT_EQ(run("b", "3").code, 0);
  for (const char* f : {"paths_sde.csv", "paths_pathspace.csv", "summary.csv", "cross_route.csv", "decomposition.csv"})
    EXPECT_EQ(slurp(path(std::string("a/") + f)), slurp(path(std::string("b/") + f))) << f;
  auto c = cli({"simulate", "--preset", "shifted_branching", "--route", "sde", "--replicates", "100", "--dt", "0.01",
                "--seed", "18", "--out", path("c")});
  EXPECT_NE(slurp(path("a/paths_sde.csv")), slurp(path("c/paths_sde.csv")));
}

TEST_F(Cli, CompareIdenticalAndReversed) {
  auto r = cli({"compare", "--preset", "shifted_branching", "--lower", "shifted_branching", "--upper",
                "shifted_branching", "--replicates", "10", "--dt", "0.01", "--out", path("c")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(value(r.out, "max_gap"), 0.0);
  EXPECT_EQ(value(r.out, "violations"), 0.0);
  EXPECT_EQ(slurp(path("c/compare.csv")).rfind("# cbdi-compare v1\n", 0), 0u);

  r = cli({"compare", "--preset", "shifted_branching", "--lower", "shifted_branching", "--upper", "none", "--out",
           path("d")});
  EXPECT_EQ(r.code, kExitHypothesis);
  EXPECT_NE(r.err.find("hypothesis violation"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(path("d/compare.csv")));
}

TEST_F(Cli, CompareOrderedPair) {
  auto r = cli({"compare", "--preset", "competition", "--lower", "preset=competition,beta=1,gamma=0.9", "--upper",
                "preset=competition,beta=1,gamma=0.3", "--replicates", "20", "--dt", "0.01", "--out", path("c")});
  ASSERT_EQ(r.code, 0) << r.err << r.out;
  EXPECT_EQ(value(r.out, "violations"), 0.0);
}

TEST_F(Cli, ValidateSubset) {
  auto r = cli({"validate", "--preset", "jump", "--checks", "flow,kuznetsov,laplace_cb", "--replicates", "2000",
                "--dt", "0.01", "--out", path("v")});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_NE(r.out.find("suite PASSED"), std::string::npos);
  EXPECT_EQ(slurp(path("v/report.csv")).rfind("# cbdi-report v1\n", 0), 0u);
  EXPECT_NE(slurp(path("v/report.txt")).find("[summary]"), std::string::npos);
}

TEST_F(Cli, DefaultSuitePasses) {
  auto r = cli({"validate", "--replicates", "2000", "--dt", "0.01", "--out", path("v")});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
}
