#include <gtest/gtest.h>
#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kCli = TDNLS_CLI;
const fs::path kScenarios = TDNLS_SCENARIO_DIR;

struct Outcome {
  int code = -1;
  std::string out;
};

/// Runs the CLI with args; stderr is discarded.
Outcome cli(const std::string& args) {
  const std::string cmd = "'" + kCli + "' " + args + " 2>/dev/null";
  Outcome o;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return o;
  char buf[4096];
  std::size_t n = 0;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) o.out.append(buf, n);
  const int status = pclose(p);
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

fs::path scratch(const std::string& tag) {
  const auto dir = fs::temp_directory_path() / ("tdnls_cli_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<std::vector<double>> parse_csv(const std::string& text, std::vector<std::string>* header = nullptr) {
  std::stringstream ss(text);
  std::string line;
  std::vector<std::vector<double>> rows;
  bool first = true;
  while (std::getline(ss, line)) {
    std::stringstream ls(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ls, cell, ',')) {
      if (first && header) header->push_back(cell);
      if (!first) row.push_back(std::stod(cell));
    }
    if (!first) rows.push_back(row);
    first = false;
  }
  return rows;
}

const char* kSmall = R"(name: small
grid: {dim: 1, n: 256, L: 20}
sigma: 1
potential: zero
initial: {kind: gaussian}
solver: {dt: 1.0e-2, t_end: 1, stride: 5}
)";

}  // namespace

TEST(Cli, BoundWorkedExample) {
  const auto o = cli("bound --C 1 --alpha 1 --tau0 1 --t 1 --w0 1 --f 0 --kappa 0.1");
  ASSERT_EQ(o.code, 0);
  const auto j = json::parse(o.out);
  EXPECT_EQ(j["N"], 28);
  EXPECT_NEAR(j["tau"].get<double>(), 0.1 / std::exp(1.0), 1e-15);
  EXPECT_NEAR(j["amplification"].get<double>() / std::pow(20.0 / 9.0, 28), 1.0, 1e-12);
  EXPECT_NEAR(j["kappa_identity"].get<double>(), 0.1, 1e-15);
  EXPECT_TRUE(j["bound_check"].get<bool>());
}

TEST(Cli, BoundTraceFile) {
  const auto dir = scratch("trace");
  const auto file = dir / "trace.csv";
  ASSERT_EQ(cli("bound --t 1 --w0 1 --trace '" + file.string() + "'").code, 0);
  std::ifstream in(file);
  std::stringstream ss;
  ss << in.rdbuf();
  const auto rows = parse_csv(ss.str());
  ASSERT_EQ(rows.size(), 29u);
  EXPECT_NEAR(rows[1][2], 20.0 / 9.0, 1e-15);
  fs::remove_all(dir);
}

TEST(Cli, HillWithZeroFrequencyIsFree) {
  const auto o = cli("hill --omega-kind constant --c 0 --t0 0 --t1 5 --step 0.01");
  ASSERT_EQ(o.code, 0);
  std::vector<std::string> header;
  const auto rows = parse_csv(o.out, &header);
  ASSERT_EQ(header.size(), 8u);
  EXPECT_EQ(header[3], "nu");
  ASSERT_EQ(rows.size(), 501u);
  for (const auto& r : rows) {
    EXPECT_NEAR(r[3], 1.0, 1e-14);
    EXPECT_NEAR(r[1], r[0], 1e-12);
    EXPECT_NEAR(r[5], 1.0, 1e-14);
  }
}

TEST(Cli, HillPairOnDecayingFrequency) {
  const auto o = cli("hill --pair --omega-kind power_decay --c 1 --gamma 3 --T 20 --T-max 2000 --extend-to 0");
  ASSERT_EQ(o.code, 0);
  const auto rows = parse_csv(o.out);
  ASSERT_GT(rows.size(), 10u);
  EXPECT_DOUBLE_EQ(rows.front()[0], 0.0);
  for (const auto& r : rows) EXPECT_NEAR(r[5], 1.0, 1e-8);
}

TEST(Cli, FitRecoversRate) {
  const auto dir = scratch("fit");
  const auto file = dir / "series.csv";
  {
    std::ofstream out(file);
    out << "t,y\n";
    for (int i = 0; i <= 50; ++i) {
      const double t = 0.2 * i;
      out << t << "," << 2.0 * std::exp(0.7 * t) << "\n";
    }
  }
  auto o = cli("fit '" + file.string() + "' --column y --model exp");
  ASSERT_EQ(o.code, 0);
  EXPECT_NEAR(json::parse(o.out)["fit"]["exponent"].get<double>(), 0.70, 0.02);
  o = cli("fit '" + file.string() + "' --column y");
  ASSERT_EQ(o.code, 0);
  EXPECT_EQ(json::parse(o.out)["best"], "exp");
  EXPECT_EQ(cli("fit '" + file.string() + "' --column z").code, 2);
  fs::remove_all(dir);
}

TEST(Cli, VerifyPotential) {
  auto o = cli("verify-potential --kind repulsive");
  ASSERT_EQ(o.code, 0);
  auto j = json::parse(o.out);
  EXPECT_TRUE(j["passes"].get<bool>());
  EXPECT_NEAR(j["worst_bounds"]["2"].get<double>(), 2.0, 1e-6);
  o = cli("verify-potential --kind isotropic --omega-kind power_decay --c 1 --gamma 3");
  ASSERT_EQ(o.code, 0);
  EXPECT_TRUE(json::parse(o.out).contains("sharpness"));
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(cli("").code, 2);
  EXPECT_EQ(cli("frobnicate").code, 2);
  EXPECT_EQ(cli("bound --C 0.5").code, 2);
  EXPECT_EQ(cli("run '" + (kScenarios / "missing.yaml").string() + "'").code, 2);
  EXPECT_EQ(cli("--help").code, 0);

  const auto dir = scratch("codes");
  {
    std::ofstream(dir / "bad.yaml") << "name: bad\nsolver: {dt: 0.1, tend: 1}\n";
    std::string text = kSmall;
    text.replace(text.find("stride: 5}"), 10, "stride: 5, blowup_factor: 1.0e-3}");
    std::ofstream(dir / "guard.yaml") << text;
    std::ofstream(dir / "expect.yaml") << kSmall << "analysis: {expect: {h1: double_exp}}\n";
  }
  const std::string out = "--out-dir '" + (dir / "out").string() + "' ";
  EXPECT_EQ(cli(out + "run '" + (dir / "bad.yaml").string() + "'").code, 2);
  EXPECT_EQ(cli(out + "run '" + (dir / "guard.yaml").string() + "'").code, 3);
  EXPECT_EQ(cli(out + "run '" + (dir / "expect.yaml").string() + "'").code, 0);
  EXPECT_EQ(cli(out + "--strict run '" + (dir / "expect.yaml").string() + "'").code, 4);
  fs::remove_all(dir);
}

TEST(Cli, FreeGaussianScenarioIsFast) {
  const auto dir = scratch("free");
  const auto start = std::chrono::steady_clock::now();
  const auto o = cli("--out-dir '" + dir.string() + "' run '" + (kScenarios / "free-gaussian.yaml").string() + "'");
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  ASSERT_EQ(o.code, 0);
  EXPECT_LE(seconds, 5.0);
  EXPECT_TRUE(fs::exists(dir / "free-gaussian" / "timeseries.csv"));
  std::ifstream in(dir / "free-gaussian" / "summary.json");
  const auto j = json::parse(in);
  EXPECT_TRUE(j["expectations_met"].get<bool>());
  EXPECT_LE(j["max_mass_drift"].get<double>(), 1e-10);
  fs::remove_all(dir);
}

TEST(Cli, RepulsiveSummaryReportsExponentialRate) {
  const auto dir = scratch("rep");
  ASSERT_EQ(cli("--out-dir '" + dir.string() + "' run '" + (kScenarios / "repulsive.yaml").string() + "'").code, 0);
  std::ifstream in(dir / "repulsive" / "summary.json");
  const auto j = json::parse(in);
  EXPECT_EQ(j["fits"]["sigma1"]["best"], "exp");
  // Sigma norms track cosh(sqrt 2 t), whose log slope on [1, 2] is close to sqrt 2
  const double rate = j["fits"]["sigma1"]["models"]["exp"]["exponent"].get<double>();
  EXPECT_GT(rate, 1.0);
  EXPECT_LT(rate, std::sqrt(2.0) + 0.05);
  fs::remove_all(dir);
}

TEST(Cli, SweepWritesTable) {
  const auto dir = scratch("sweep");
  std::ofstream(dir / "s.yaml") << kSmall;
  const auto o =
      cli("--jobs 2 --out-dir '" + dir.string() + "' sweep '" + (dir / "s.yaml").string() + "' --grid dt=0.01,0.02");
  ASSERT_EQ(o.code, 0);
  EXPECT_EQ(std::count(o.out.begin(), o.out.end(), '\n'), 3);
  EXPECT_TRUE(fs::exists(dir / "small_sweep.csv"));
  fs::remove_all(dir);
}
