#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "waitmarket/cli.hpp"
#include "waitmarket/config.hpp"
#include "waitmarket/csv.hpp"

using namespace waitmarket;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = WAITMARKET_FIXTURE_DIR;

class Cli : public ::testing::Test {
 public:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("waitmarket_cli_" + std::string(info->name()) + "_" +
                                        std::to_string(static_cast<long long>(::getpid())));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Runs the binary; stdout/stderr land in files next to the outputs.
  int run(const std::string& args) {
    const std::string cmd = std::string("\"") + WAITMARKET_CLI_PATH + "\" " + args + " > \"" +
                            (dir_ / "stdout.txt").string() + "\" 2> \"" + (dir_ / "stderr.txt").string() + "\"";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string slurp(const fs::path& p) const {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  }
  std::string err() const { return slurp(dir_ / "stderr.txt"); }
  std::string out() const { return slurp(dir_ / "stdout.txt"); }

  fs::path write_config(const std::string& name, const nlohmann::json& j) const {
    const auto p = dir_ / name;
    std::ofstream(p) << j.dump(2);
    return p;
  }

  static nlohmann::json env_a0_config() {
    std::ifstream in(kFixtures / "env-a0.json");
    return nlohmann::json::parse(in);
  }

  static std::vector<std::string> lines(const std::string& text) {
    std::vector<std::string> v;
    std::istringstream s(text);
    for (std::string l; std::getline(s, l);) v.push_back(l);
    return v;
  }

  static std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> v;
    std::istringstream s(line);
    for (std::string c; std::getline(s, c, ',');) v.push_back(c);
    return v;
  }

  fs::path dir_;
};

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

}  // namespace

TEST(LoadConfig, BundledEnvA0) {
  const auto c = load_config(kFixtures / "env-a0.json");
  EXPECT_EQ(c.env.num_states(), 2u);
  EXPECT_EQ(c.grid_nodes, 401u);
  EXPECT_EQ(c.seed, 20240611u);
  EXPECT_EQ(c.runs, 100000u);
  EXPECT_NEAR(c.env.prior()[1], 0.8, 1e-15);
}

TEST(LoadConfig, OverridesWin) {
  Overrides o;
  o.grid_nodes = 51;
  o.seed = 3;
  const auto c = load_config(kFixtures / "env-a0.json", o);
  EXPECT_EQ(c.env.num_nodes(), 51u);
  EXPECT_EQ(c.seed, 3u);
}

TEST(LoadConfig, EveryBundledFixtureLoads) {
  for (const auto& e : fs::directory_iterator(kFixtures)) EXPECT_NO_THROW(load_config(e.path())) << e.path();
}

TEST(LoadConfig, NegativeArrivalRate) {
  auto j = Cli::env_a0_config();
  j["environment"]["arrival_rate"] = -1.0;
  try {
    config_from_json(j, kFixtures);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
    EXPECT_NE(std::string(e.what()).find("arrival_rate must be > 0"), std::string::npos);
  }
}

TEST(LoadConfig, NonSingleCrossingNamesCheckB) {
  auto j = Cli::env_a0_config();
  j["environment"]["v_seller"] = {0.0, 1.0};
  try {
    config_from_json(j, kFixtures);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::invalid_environment);
    EXPECT_NE(std::string(e.what()).find("(b)"), std::string::npos) << e.what();
  }
}

TEST(LoadConfig, UnknownKeyIsNamed) {
  auto j = Cli::env_a0_config();
  j["environment"]["signals"]["tpo"] = 1;
  try {
    config_from_json(j, kFixtures);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("tpo"), std::string::npos) << e.what();
  }
}

TEST(LoadConfig, NonPositiveTolerance) {
  auto j = Cli::env_a0_config();
  j["tol"] = 0.0;
  EXPECT_THROW(config_from_json(j, kFixtures), Error);
}

TEST(ParseJson, ReportsLineAndColumn) {
  try {
    parse_json_text("{\n  \"a\": 1,\n  \"b\": ]\n}", "bad.json");
    FAIL();
  } catch (const Error& e) {
    const std::string m = e.what();
    EXPECT_NE(m.find("line 3"), std::string::npos) << m;
    EXPECT_NE(m.find("column"), std::string::npos) << m;
  }
}

TEST(Csv, SeventeenDigitsAndSpecials) {
  EXPECT_EQ(csv::format_double(0.1), "0.10000000000000001");
  EXPECT_EQ(csv::format_double(1.0), "1");
  EXPECT_EQ(csv::format_double(std::numeric_limits<double>::infinity()), "inf");
  EXPECT_EQ(std::stod(csv::format_double(2.0 / 3.0)), 2.0 / 3.0);
  csv::Table t({"a", "b"});
  EXPECT_THROW(t.add({1.0}), Error);
}

TEST(ErrorRecord, ExitCodes) {
  EXPECT_EQ(cli::exit_code(ErrorKind::usage), 2);
  EXPECT_EQ(cli::exit_code(ErrorKind::config), 2);
  EXPECT_EQ(cli::exit_code(ErrorKind::convergence), 1);
  EXPECT_EQ(cli::exit_code(ErrorKind::cap_exceeded), 1);
  const auto r = cli::error_record(ErrorKind::usage, "x");
  EXPECT_EQ(r["exit_code"], 2);
}

TEST_F(Cli, ValidatePrintsReport) {
  EXPECT_EQ(run("validate --config " + q(kFixtures / "env-a0.json")), 0);
  EXPECT_NE(out().find("(a)"), std::string::npos);
  EXPECT_NE(out().find("(g)"), std::string::npos);
}

TEST_F(Cli, ValidateFailureExitsTwo) {
  auto j = env_a0_config();
  j["environment"]["v_seller"] = {0.0, 1.0};
  EXPECT_EQ(run("validate --config " + q(write_config("bad.json", j))), 2);
  EXPECT_NE(out().find("(b)"), std::string::npos);
}

TEST_F(Cli, NegativeArrivalRateIsConfigError) {
  auto j = env_a0_config();
  j["environment"]["arrival_rate"] = -2;
  EXPECT_EQ(run("solve-commitment --config " + q(write_config("neg.json", j)) + " --out " + q(dir_)), 2);
  const auto rec = nlohmann::json::parse(err());
  EXPECT_EQ(rec["exit_code"], 2);
  EXPECT_NE(rec["message"].get<std::string>().find("arrival_rate must be > 0"), std::string::npos);
}

TEST_F(Cli, ParseErrorCarriesPosition) {
  const auto p = dir_ / "broken.json";
  std::ofstream(p) << "{\n\"environment\": {,\n}";
  EXPECT_EQ(run("validate --config " + q(p)), 2);
  const auto rec = nlohmann::json::parse(err());
  EXPECT_NE(rec["message"].get<std::string>().find("line 2"), std::string::npos) << err();
}

TEST_F(Cli, UnknownFlagAndFixtureAreUsageErrors) {
  EXPECT_EQ(run("solve-commitment --frobnicate 3"), 2);
  EXPECT_EQ(run("reproduce figure9"), 2);
  EXPECT_EQ(run("solve-commitment"), 2);
  EXPECT_EQ(run("reproduce env-a0 --tol -1"), 2);
}

TEST_F(Cli, SweepEmptyRangeIsUsageError) {
  auto j = nlohmann::json::parse(slurp(kFixtures / "sweep-top-rate.json"));
  j["environment"] = env_a0_config()["environment"];
  j["sweep"]["from"] = 0.3;
  j["sweep"]["to"] = 0.2;
  EXPECT_EQ(run("sweep --config " + q(write_config("empty.json", j)) + " --out " + q(dir_)), 2);
  EXPECT_EQ(nlohmann::json::parse(err())["error"], "usage");
  j["sweep"]["from"] = 0.2;
  j["sweep"]["steps"] = 0;
  EXPECT_EQ(run("sweep --config " + q(write_config("zero.json", j)) + " --out " + q(dir_)), 2);
}

TEST_F(Cli, SweepRows) {
  EXPECT_EQ(run("sweep --config " + q(kFixtures / "sweep-top-rate.json") + " --grid-nodes 41 --out " + q(dir_)), 0)
      << err();
  const auto rows = lines(slurp(dir_ / "sweep.csv"));
  ASSERT_EQ(rows.size(), 8u);
  EXPECT_EQ(rows[0], "parameter,v_bar,p_star,value_gap");
  // Sharper top-signal tests raise the commitment value.
  double prev = -1.0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto cells = split(rows[i]);
    ASSERT_EQ(cells.size(), 4u);
    const double v = std::stod(cells[1]);
    EXPECT_GT(v, prev);
    EXPECT_GT(std::stod(cells[3]), 0.0);
    prev = v;
  }
}

TEST_F(Cli, SolveCommitmentOutputs) {
  ASSERT_EQ(run("solve-commitment --config " + q(kFixtures / "env-a0.json") + " --out " + q(dir_)), 0) << err();
  const auto profile = lines(slurp(dir_ / "exit_profile.csv"));
  ASSERT_EQ(profile.size(), 402u);
  EXPECT_EQ(profile[0], "y,s_bar");
  EXPECT_NEAR(std::stod(split(profile[1])[1]), std::log(8.0) / 0.1, 1e-6);
  EXPECT_EQ(lines(slurp(dir_ / "prices.csv"))[0], "t,p_bar,p_hat");
  EXPECT_NEAR(std::stod(slurp(dir_ / "value.txt")), 0.6125, 1e-6);
}

TEST_F(Cli, SolveEquilibriumOutputs) {
  ASSERT_EQ(run("solve-equilibrium --config " + q(kFixtures / "env-a0.json") + " --out " + q(dir_)), 0) << err();
  const auto eq = lines(slurp(dir_ / "equilibrium.csv"));
  EXPECT_EQ(eq[0], "y,s_star,p_star,residual");
  EXPECT_NEAR(std::stod(split(eq[1])[2]), 1.805, 1e-3);
  const auto th = lines(slurp(dir_ / "thresholds.csv"));
  ASSERT_EQ(th.size(), 3u);
  EXPECT_EQ(th[0], "x,threshold");
}

TEST_F(Cli, SimulateIsByteIdenticalOnRerun) {
  const std::string args = "simulate --config " + q(kFixtures / "env-a0.json") + " --runs 2000 --seed 9 --out ";
  ASSERT_EQ(run(args + q(dir_ / "a")), 0) << err();
  ASSERT_EQ(run(args + q(dir_ / "b")), 0) << err();
  for (const char* f : {"runs.csv", "summary.csv"}) {
    const auto a = slurp(dir_ / "a" / f);
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, slurp(dir_ / "b" / f)) << f;
    EXPECT_EQ(a.find('\r'), std::string::npos);
  }
  const auto runs = lines(slurp(dir_ / "a" / "runs.csv"));
  EXPECT_EQ(runs.size(), 2001u);
  EXPECT_EQ(runs[0], "run,state,type,exit,traded,trade_time,signal,price,offers,surplus,profit,rent");
  EXPECT_EQ(lines(slurp(dir_ / "a" / "summary.csv"))[0], "metric,value,se");
}

TEST_F(Cli, SimulatePricingAndAcceptanceOptions) {
  auto j = env_a0_config();
  j["runs"] = 1000;
  j["simulate"] = {{"exit_scale", 0.5}, {"pricing", 1.6}, {"acceptance", {0, 1}}};
  ASSERT_EQ(run("simulate --config " + q(write_config("sim.json", j)) + " --out " + q(dir_)), 0) << err();
  const auto runs = lines(slurp(dir_ / "runs.csv"));
  for (std::size_t i = 1; i < runs.size(); ++i) {
    const auto c = split(runs[i]);
    EXPECT_NEAR(std::stod(c[3]), 0.5 * std::log(8.0) / 0.1, 1e-6);
    if (c[4] == "1") { EXPECT_EQ(std::stod(c[7]), 1.6); }
  }
  j["simulate"]["acceptance"] = {5};
  EXPECT_EQ(run("simulate --config " + q(write_config("sim2.json", j)) + " --out " + q(dir_)), 2);
}

TEST_F(Cli, ReproduceFigure1HasThreePriorColumns) {
  ASSERT_EQ(run("reproduce figure1 --grid-nodes 101 --out " + q(dir_)), 0) << err();
  const auto rows = lines(slurp(dir_ / "figure1.csv"));
  ASSERT_EQ(rows.size(), 102u);
  EXPECT_EQ(rows[0], "y,s_bar_mu_0.5,s_bar_mu_0.2,s_bar_mu_0.3");
  // The low-prior column rises; the middle prior rises then falls somewhere.
  std::vector<double> low, mid;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto c = split(rows[i]);
    low.push_back(std::stod(c[2]));
    mid.push_back(std::stod(c[3]));
  }
  EXPECT_TRUE(nondecreasing(low));
  bool rise = false, fall = false;
  for (std::size_t i = 1; i < mid.size(); ++i) {
    rise = rise || mid[i] > mid[i - 1];
    fall = fall || mid[i] < mid[i - 1];
  }
  EXPECT_TRUE(rise && fall);
}

TEST_F(Cli, ReproduceEnvCSummary) {
  ASSERT_EQ(run("reproduce appendix-d3 --out " + q(dir_)), 0) << err();
  const auto rows = lines(slurp(dir_ / "appendix_d3.csv"));
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0], "metric,value");
  EXPECT_EQ(split(rows[2])[0], "posterior_x0");
  EXPECT_EQ(split(rows[3])[0], "p_hat");
  EXPECT_NEAR(std::stod(split(rows[4])[1]), 0.30, 0.02);
}

TEST_F(Cli, ReproduceIsIdempotent) {
  ASSERT_EQ(run("reproduce appendix-d2 --out " + q(dir_ / "a")), 0) << err();
  ASSERT_EQ(run("reproduce appendix-d2 --out " + q(dir_ / "b")), 0) << err();
  EXPECT_EQ(slurp(dir_ / "a" / "appendix_d2.csv"), slurp(dir_ / "b" / "appendix_d2.csv"));
}
