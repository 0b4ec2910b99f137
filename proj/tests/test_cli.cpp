#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

namespace {

struct Result {
  int code;
  std::string out, err;
};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

Result run(const std::string& args) {
  const auto dir = std::filesystem::temp_directory_path();
  const std::string tag = ::testing::UnitTest::GetInstance()->current_test_info()->name();
  const auto o = dir / ("renewal_lab_cli_" + tag + ".out"), e = dir / ("renewal_lab_cli_" + tag + ".err");
  const std::string cmd =
      std::string(RENEWAL_LAB_CLI_PATH) + " " + args + " > " + o.string() + " 2> " + e.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(o), slurp(e)};
}

}  // namespace

TEST(Cli, ClassifyTwoSided) {
  auto r = run("classify --family two_sided_log --p 0.75");
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["ha"]["verdict"], "holds");
  EXPECT_EQ(j["hb"]["verdict"], "holds");
  EXPECT_EQ(j["config"]["family"], "two_sided_log");
  EXPECT_DOUBLE_EQ(j["kappa"].get<double>(), 0.5);
}

TEST(Cli, VerifyCorollary2) {
  auto r = run("verify --suite corollary2 --family harmonic1 --xmax 1e5 --h 1");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("x,side,measured,measured_err,predicted,ratio,ratio_err,method,in_band\n"), std::string::npos);
  EXPECT_NE(r.out.find("# suite=corollary2"), std::string::npos);
  EXPECT_NE(r.out.find("# xmax=1e5"), std::string::npos);
}

TEST(Cli, MonteCarloNeedsSeed) {
  auto r = run("green --family harmonic1 --engine montecarlo");
  EXPECT_EQ(r.code, 2);
  auto j = nlohmann::json::parse(r.err);
  EXPECT_EQ(j["exit_code"], 2);
  EXPECT_EQ(j["error"], "invalid_parameter");
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("green --family harmonic1 --bogus 1").code, 2);
  EXPECT_EQ(run("classify --family nope").code, 2);
  EXPECT_EQ(run("functionals --family harmonic1 --tol -1").code, 2);
  EXPECT_EQ(run("verify --suite nope --family harmonic1").code, 2);
  EXPECT_EQ(run("classify --family harmonic1 --config /nonexistent/file").code, 2);
}

TEST(Cli, SuiteFailureExitCode) { EXPECT_EQ(run("verify --suite theorem --family harmonic1 --grid 2,3").code, 1); }

TEST(Cli, NonconvergenceExitCode) {
  auto r = run("charfn --family c2_ha_only --delta 0.75");
  EXPECT_EQ(r.code, 3);
  auto j = nlohmann::json::parse(r.err);
  EXPECT_EQ(j["error"], "nonconvergent");
  EXPECT_TRUE(j.contains("trace"));
}

TEST(Cli, ConfigFileAndOverride) {
  const auto cfg = std::filesystem::temp_directory_path() / "renewal_lab_cli_test.cfg";
  {
    std::ofstream f(cfg);
    f << "family = two_sided_log\np = 0.6\n";
  }
  auto r = run("classify --config " + cfg.string() + " --p 0.75");
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["config"]["p"], "0.75");
  EXPECT_DOUBLE_EQ(j["kappa"].get<double>(), 0.5);
  {
    std::ofstream f(cfg);
    f << "family = harmonic1\ncolour = blue\n";
  }
  EXPECT_EQ(run("classify --config " + cfg.string()).code, 2);
  std::filesystem::remove(cfg);
}

TEST(Cli, DeterministicOutput) {
  const std::string args = "green --family two_sided_log --p 0.75 --engine montecarlo --seed 5 --walks 2000 --grid 10,20";
  auto a = run(args);
  auto b = run(args + " --jobs 3");
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  auto ja = nlohmann::json::parse(a.out), jb = nlohmann::json::parse(b.out);
  EXPECT_EQ(ja["rows"], jb["rows"]);
  EXPECT_EQ(run(args).out, a.out);
}

TEST(Cli, OutputDirectory) {
  const auto dir = std::filesystem::temp_directory_path() / "renewal_lab_cli_outdir";
  std::filesystem::remove_all(dir);
  auto r = run("verify --suite corollary2 --family harmonic1 --xmax 1e3 --format json --out " + dir.string());
  ASSERT_EQ(r.code, 0) << r.err;
  int n = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    (void)e;
    ++n;
  }
  EXPECT_EQ(n, 2);
  std::filesystem::remove_all(dir);
}

TEST(Cli, OtherSubcommands) {
  auto f = run("functionals --family two_sided_log --p 0.75 --grid 100,1000 --format csv");
  ASSERT_EQ(f.code, 0) << f.err;
  EXPECT_NE(f.out.find("x,ell,A,m,r_plus,r_minus"), std::string::npos);
  auto c = run("charfn --family harmonic1 --grid 0.1,0.01");
  ASSERT_EQ(c.code, 0) << c.err;
  EXPECT_EQ(nlohmann::json::parse(c.out)["rows"].size(), 2u);
  auto g = run("green --family harmonic1 --grid 1,2");
  ASSERT_EQ(g.code, 0) << g.err;
  auto j = nlohmann::json::parse(g.out);
  EXPECT_EQ(j["rows"][0]["U"], "0.5");
  auto fs = run("green --family harmonic1 --engine fourier --grid 100 --a 1");
  ASSERT_EQ(fs.code, 0) << fs.err;
  auto b = run("verify --suite baseline --seed 1");
  EXPECT_EQ(b.code, 0) << b.err;
}
