#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "retrip/synth.hpp"
#include "test_support.hpp"
#include "cli.hpp"

namespace retrip {
namespace {

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string value_of(const std::string& config, const std::string& key) {
  std::istringstream in(config);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(key + " = ", 0) == 0) return line.substr(key.size() + 3);
  }
  return "<missing>";
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(cli({"frobnicate"}).code, 2);
  const CliRun dup = cli({"keypoints", "--in", "a.rtrp", "--z-a", "1", "--z-a", "2"});
  EXPECT_EQ(dup.code, 2);
  EXPECT_EQ(dup.err.rfind("error: ", 0), 0u);
  EXPECT_EQ(cli({"keypoints"}).code, 2);  // --in is required
  EXPECT_EQ(cli({"keypoints", "--in", "a.rtrp", "--z-a", "abc"}).code, 2);
  EXPECT_EQ(cli({"synth", "--preset", "moon", "--out", "x"}).code, 2);
}

TEST(Cli, RuntimeErrorsExitOne) {
  const CliRun r = cli({"keypoints", "--in", "/nonexistent/scan.rtrp"});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error: ", 0), 0u);
}

TEST(Cli, PrintConfigPrecedence) {
  const CliRun d = cli({"--print-config"});
  ASSERT_EQ(d.code, 0);
  EXPECT_EQ(value_of(d.out, "z-a"), "4.5");
  EXPECT_EQ(value_of(d.out, "candidates"), "10");
  EXPECT_EQ(value_of(d.out, "exclusion"), "100");

  test::TempDir dir("cli_cfg");
  const auto file = (dir.path() / "c.cfg").string();
  std::ofstream(file) << "env = indoor\ncandidates = 3\nside-tol = 0.3\n";
  const CliRun f = cli({"--config", file, "--print-config", "keypoints", "--in", "x", "--candidates", "7"});
  ASSERT_EQ(f.code, 0) << f.err;
  EXPECT_EQ(value_of(f.out, "z-a"), "3.5");       // preset from the file's env
  EXPECT_EQ(value_of(f.out, "candidates"), "7");  // flag beats file
  EXPECT_EQ(value_of(f.out, "side-tol"), "0.3");  // file beats default

  // the environment preset sits below explicit settings
  std::ofstream(file) << "z-a = 2\nenv = indoor\n";
  EXPECT_EQ(value_of(cli({"--config", file, "--print-config"}).out, "z-a"), "2");
}

TEST(Cli, EndToEnd) {
  test::TempDir dir("cli_e2e");
  const auto bench = (dir.path() / "bench").string();
  // default preset sizes are too slow for a unit test; shrink via flags
  const CliRun s = cli({"--workers", "2", "synth", "--preset", "corridor", "--out", bench, "--spacing", "8"});
  ASSERT_EQ(s.code, 0) << s.err;
  const auto info = read_benchmark_info(bench);
  ASSERT_GE(info.frames, 3u);
  const auto scan0 = benchmark_scan_path(bench, 0).string();

  const CliRun k = cli({"keypoints", "--in", scan0});
  ASSERT_EQ(k.code, 0) << k.err;
  EXPECT_EQ(k.out.rfind("index,class\n", 0), 0u);
  EXPECT_NE(k.out.find(",ARP"), std::string::npos);

  const CliRun i = cli({"instances", "--in", scan0, "--env", "indoor"});
  ASSERT_EQ(i.code, 0) << i.err;
  EXPECT_EQ(i.out.rfind("label,size,cx,cy,cz\n", 0), 0u);

  const auto desc = (dir.path() / "d.csv").string();
  ASSERT_EQ(cli({"describe", "--in", scan0, "--env", "indoor", "--out", desc}).code, 0);
  std::ifstream d(desc);
  std::string header;
  std::getline(d, header);
  EXPECT_EQ(header, "t,l12,l23,l13,qx,qy,qz,lab1,lab2,lab3,size1,size2,size3");

  const auto db = (dir.path() / "x.db").string();
  ASSERT_EQ(cli({"build-db", "--benchmark", bench, "--env", "indoor", "--out", db}).code, 0);
  const CliRun q = cli({"query", "--db", db, "--scan", scan0, "--env", "indoor"});
  ASSERT_EQ(q.code, 0) << q.err;
  EXPECT_NE(q.out.find("\n1,0,"), std::string::npos);  // the scan finds itself first

  const CliRun v = cli({"verify", "--db", db, "--scan", scan0, "--env", "indoor", "--candidate", "0"});
  ASSERT_EQ(v.code, 0) << v.err;
  EXPECT_NE(v.out.find("\n0,true,1,"), std::string::npos);

  const CliRun b = cli({"bench", "--scan", scan0, "--iters", "2", "--env", "indoor"});
  ASSERT_EQ(b.code, 0) << b.err;
  for (const char* col : {"Descriptor", "Search", "Total", "p50", "p99"}) EXPECT_NE(b.out.find(col), std::string::npos);

  const auto metrics = (dir.path() / "m").string();
  const CliRun e = cli({"evaluate", "--benchmark", bench, "--out", metrics, "--exclusion", "2"});
  ASSERT_EQ(e.code, 0) << e.err;
  for (const char* f : {"records.csv", "pr_curve.csv", "timings.csv", "summary.csv", "config.txt"}) {
    EXPECT_TRUE(std::filesystem::exists(std::filesystem::path(metrics) / f)) << f;
  }
  // the benchmark's indoor environment was picked up
  std::ifstream c(std::filesystem::path(metrics) / "config.txt");
  std::stringstream cs;
  cs << c.rdbuf();
  EXPECT_EQ(value_of(cs.str(), "env"), "indoor");
}

}  // namespace
}  // namespace retrip
