#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out;
};

// Runs the CLI with stderr merged into stdout.
Result run(const std::string& args) {
  const std::string cmd = std::string(CCI_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return {-1, ""};
  std::string out;
  std::array<char, 4096> buf{};
  while (auto n = fread(buf.data(), 1, buf.size(), pipe)) out.append(buf.data(), n);
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string config(const std::string& name) {
  return (fs::path(CCI_SOURCE_DIR) / "configs" / name).string();
}

fs::path temp_dir(const std::string& name) {
  return fs::temp_directory_path() / ("cci_cli_" + std::to_string(::getpid()) + "_" + name);
}

TEST(Certify, AllZeroStreamIsFeasibleAt17) {
  const auto r = run("certify --synthetic-r 0 --epsilon 0.4 --delta 0.05 --n-max 40 --seed 7 --json");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j.at("verdict"), "feasible");
  EXPECT_EQ(j.at("stopping_time"), 17);
  EXPECT_EQ(j.at("response"), "answer");
}

TEST(Certify, AllOneStreamIsInfeasibleAt7) {
  const auto r = run("certify --synthetic-r 1 --epsilon 0.4 --delta 0.05 --n-max 40 --seed 7");
  EXPECT_EQ(r.code, 2) << r.out;
  EXPECT_NE(r.out.find("infeasible"), std::string::npos);
  EXPECT_NE(r.out.find("samples:        7\n"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("(abstain)"), std::string::npos);
}

TEST(Certify, UndecidedExitCode) {
  const auto r = run("certify --synthetic-r 0.4 --epsilon 0.4 --n-max 40 --seed 1 --json");
  EXPECT_EQ(r.code, 3) << r.out;
  EXPECT_EQ(nlohmann::json::parse(r.out).at("stopping_time"), 40);
}

TEST(Certify, InvalidFlagsExitOne) {
  auto r = run("certify --synthetic-r 0 --epsilon 1.5");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("--epsilon"), std::string::npos) << r.out;
  r = run("certify --synthetic-r 0 --delta 0");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("--delta"), std::string::npos) << r.out;
  r = run("certify --synthetic-r 0 --n-max 0");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("--n-max"), std::string::npos) << r.out;
  r = run("certify --synthetic-r 0 --no-such-flag 3");
  EXPECT_EQ(r.code, 1);
  r = run("certify --epsilon 0.4");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("source"), std::string::npos) << r.out;
}

TEST(Certify, ScientificNotation) {
  const auto r = run("certify --synthetic-r 0e0 --epsilon 4e-1 --delta 5e-2 --n-max 40 --json");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(nlohmann::json::parse(r.out).at("stopping_time"), 17);
}

TEST(Certify, SeedDeterminesOutput) {
  const std::string args = "certify --synthetic-r 0.1 --epsilon 0.3 --n-max 500 --json --seed ";
  const auto a = run(args + "11"), b = run(args + "11");
  EXPECT_EQ(a.out, b.out);
  bool differs = false;
  for (int s = 12; s < 20 && !differs; ++s) differs = run(args + std::to_string(s)).out != a.out;
  EXPECT_TRUE(differs);
}

TEST(Certify, ConfigFileAndOverride) {
  const auto path = temp_dir("flags.ini");
  {
    std::ofstream out(path);
    out << "synthetic-r=1\nepsilon=0.4\nn-max=40\n";
  }
  auto r = run("certify --config " + path.string() + " --json");
  EXPECT_EQ(r.code, 2) << r.out;
  r = run("certify --config " + path.string() + " --synthetic-r 0 --json");
  EXPECT_EQ(r.code, 0) << r.out;
  fs::remove(path);
}

TEST(Certify, SeverityConstraintSpec) {
  // Weights {1, 0.5, 0.25}, threshold 0.5; a violation needs cost strictly above 0.5.
  const std::string spec = config("constraints_example.json");
  auto r = run("certify --synthetic-rates 0,1,1 --constraint-spec " + spec + " --epsilon 0.4 --json");
  EXPECT_EQ(r.code, 2) << r.out;
  r = run("certify --synthetic-rates 0,1,0 --constraint-spec " + spec + " --epsilon 0.4 --json");
  EXPECT_EQ(r.code, 0) << r.out;
  r = run("certify --synthetic-rates 1,0,0 --constraint-spec " + spec + " --epsilon 0.4 --json");
  EXPECT_EQ(r.code, 2) << r.out;
  r = run("certify --synthetic-rates 0,1 --constraint-spec " + spec + " --epsilon 0.4");
  EXPECT_EQ(r.code, 1) << r.out;
}

TEST(Plan, Values) {
  auto r = run("plan --gap 0.4 --delta 0.05");
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "17\n");
  r = run("plan --gap 0.2 --delta 0.05");
  EXPECT_EQ(r.out, "71\n");
  r = run("plan --gap -0.6");
  EXPECT_EQ(r.out, "7\n");
}

TEST(Plan, ZeroGap) {
  const auto r = run("plan --gap 0");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("no finite horizon"), std::string::npos) << r.out;
}

TEST(Simulate, TierTableConfig) {
  const auto dir = temp_dir("sim");
  const auto r = run("simulate --config " + config("tier_table.json") + " --out " + dir.string());
  ASSERT_EQ(r.code, 0) << r.out;
  for (const char* header : {"Difficulty", "Feasible", "Infeasible", "Undecided", "Avg. Samples"}) {
    EXPECT_NE(r.out.find(header), std::string::npos) << header;
  }
  std::ifstream csv(dir / "summary.csv");
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "tier,feasible,infeasible,undecided,aborted,avg_samples");
  EXPECT_TRUE(fs::exists(dir / "records.jsonl"));
  EXPECT_TRUE(fs::exists(dir / "summary.json"));

  const auto rep = run("report --records " + (dir / "records.jsonl").string() + " --json");
  ASSERT_EQ(rep.code, 0) << rep.out;
  const auto j = nlohmann::json::parse(rep.out);
  EXPECT_EQ(j.at("tiers").size(), 3u);
  fs::remove_all(dir);
}

TEST(Simulate, CoverageConfig) {
  const auto dir = temp_dir("cov");
  const auto r = run("simulate --config " + config("coverage.json") + " --workers 4 --out " + dir.string());
  ASSERT_EQ(r.code, 0) << r.out;
  std::ifstream in(dir / "summary.json");
  const auto j = nlohmann::json::parse(in);
  EXPECT_GE(j.at("tiers").at(0).at("coverage").get<double>(), 0.95);
  fs::remove_all(dir);
}

TEST(Simulate, MissingConfig) {
  EXPECT_EQ(run("simulate --config /nonexistent/experiment.json").code, 1);
  EXPECT_EQ(run("simulate").code, 1);
  EXPECT_EQ(run("report --records /nonexistent/records.jsonl").code, 1);
  EXPECT_EQ(run("").code, 1);
}

}  // namespace
