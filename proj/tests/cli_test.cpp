#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

// Drives the installed binary end to end: exit codes, report layout, seed
// precedence, and byte-for-byte determinism of saved reports.

namespace {

int run(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  if (status == -1) return -1;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void spit(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
}

const std::string kBin = CLI_PATH;
const std::string kConfigs = CONFIG_DIR;

std::string tmp_path(const std::string& name) { return ::testing::TempDir() + name; }

TEST(CliTest, TraceDemoMatchesHandComputedCosts) {
  const std::string out = tmp_path("trace_demo.csv");
  const int code = run(kBin + " simulate-trace --config " + kConfigs +
                       "/trace-demo.cfg --trace " + kConfigs + "/demo.trace --out " + out +
                       " 2>/dev/null");
  ASSERT_EQ(code, 0);
  const std::string csv = slurp(out);
  // one 4-way level: two cold misses, one hit, 3 + 2*50 total
  EXPECT_NE(csv.find("# events = 3"), std::string::npos);
  EXPECT_NE(csv.find("# level1 = 256/64/4/50"), std::string::npos);
  EXPECT_NE(csv.find("level,seed,hits,misses,compulsory,capacity,conflict,cost"),
            std::string::npos);
  EXPECT_NE(csv.find("L1,12345,1,2,2,0,0,100"), std::string::npos);
  EXPECT_NE(csv.find("total,12345,1,2,2,0,0,103"), std::string::npos);
}

TEST(CliTest, MalformedTraceFailsWithUsageExitNamingTheLine) {
  const std::string trace = tmp_path("bad.trace");
  const std::string err = tmp_path("bad.err");
  spit(trace, "Q 5\n");
  const int code = run(kBin + " simulate-trace --config " + kConfigs +
                       "/trace-demo.cfg --trace " + trace + " >/dev/null 2>" + err);
  EXPECT_EQ(code, 2);
  const std::string msg = slurp(err);
  EXPECT_NE(msg.find("line 1"), std::string::npos) << msg;
}

TEST(CliTest, UnknownExperimentListsTheValidNames) {
  const std::string err = tmp_path("unknown.err");
  const int code = run(kBin + " run-experiment winnow >/dev/null 2>" + err);
  EXPECT_EQ(code, 2);
  const std::string msg = slurp(err);
  for (const char* name : {"emulation-bound", "mergesort-conflict", "funnel-scaling",
                           "transpose-cost", "occupancy", "conflict-bound"})
    EXPECT_NE(msg.find(name), std::string::npos) << msg;
}

TEST(CliTest, MissingRequiredFlagAndMissingFilesExitTwo) {
  EXPECT_EQ(run(kBin + " simulate-trace --config " + kConfigs +
                "/trace-demo.cfg >/dev/null 2>&1"),
            2);
  EXPECT_EQ(run(kBin + " simulate-trace --config /no/such.cfg --trace " + kConfigs +
                "/demo.trace >/dev/null 2>&1"),
            2);
  EXPECT_EQ(run(kBin + " run-experiment occupancy --trials 100 --out /no/such/dir/r.csv" +
                " >/dev/null 2>&1"),
            2);
  EXPECT_EQ(run(kBin + " run-experiment occupancy --format yaml >/dev/null 2>&1"), 2);
  EXPECT_EQ(run(kBin + " >/dev/null 2>&1"), 2);
}

TEST(CliTest, HelpExitsZero) {
  EXPECT_EQ(run(kBin + " --help >/dev/null 2>&1"), 0);
  EXPECT_EQ(run(kBin + " run-experiment --help >/dev/null 2>&1"), 0);
}

TEST(CliTest, RepeatedRunsProduceByteIdenticalReports) {
  const std::string a = tmp_path("det_a.csv");
  const std::string b = tmp_path("det_b.csv");
  const std::string base =
      kBin + " run-experiment occupancy --trials 200 --seed 7 2>/dev/null --out ";
  ASSERT_EQ(run(base + a), 0);
  ASSERT_EQ(run(base + b), 0);
  const std::string ta = slurp(a);
  EXPECT_FALSE(ta.empty());
  EXPECT_EQ(ta, slurp(b));
}

TEST(CliTest, SeedPrecedenceIsFlagThenConfigThenEnv) {
  const std::string cfg = tmp_path("seeded.cfg");
  spit(cfg, "seed = 42\n");
  const std::string out = tmp_path("seeded.csv");

  ASSERT_EQ(run("CACHELAB_SEED=777 " + kBin +
                " run-experiment occupancy --trials 100 --out " + out + " 2>/dev/null"),
            0);
  EXPECT_NE(slurp(out).find("# seed = 777"), std::string::npos);

  ASSERT_EQ(run("CACHELAB_SEED=777 " + kBin + " run-experiment occupancy --config " + cfg +
                " --trials 100 --out " + out + " 2>/dev/null"),
            0);
  EXPECT_NE(slurp(out).find("# seed = 42"), std::string::npos);

  ASSERT_EQ(run("CACHELAB_SEED=777 " + kBin + " run-experiment occupancy --config " + cfg +
                " --seed 9 --trials 100 --out " + out + " 2>/dev/null"),
            0);
  EXPECT_NE(slurp(out).find("# seed = 9"), std::string::npos);

  EXPECT_EQ(run("CACHELAB_SEED=oops " + kBin +
                " run-experiment occupancy --trials 100 >/dev/null 2>&1"),
            2);
}

TEST(CliTest, JsonOutputParsesWithTheFourKeys) {
  const std::string out = tmp_path("trace.json");
  ASSERT_EQ(run(kBin + " simulate-trace --config " + kConfigs + "/trace-demo.cfg --trace " +
                kConfigs + "/demo.trace --format json --out " + out + " 2>/dev/null"),
            0);
  const auto j = nlohmann::json::parse(slurp(out));
  EXPECT_TRUE(j.at("experiment").is_string());
  EXPECT_TRUE(j.at("config").is_object());
  EXPECT_TRUE(j.at("columns").is_array());
  EXPECT_TRUE(j.at("rows").is_array());
  EXPECT_EQ(j.at("rows").size(), 2u);
}

TEST(CliTest, SmallExperimentsExitZero) {
  const std::string emu_cfg = tmp_path("emu_small.cfg");
  spit(emu_cfg, "n = 2048\n");
  EXPECT_EQ(run(kBin + " run-experiment emulation-bound --config " + emu_cfg +
                " --trials 2 >/dev/null 2>&1"),
            0);

  const std::string ms_cfg = tmp_path("ms_small.cfg");
  spit(ms_cfg, "n = 4096\nscarce_trials = 1\n");
  EXPECT_EQ(run(kBin + " run-experiment mergesort-conflict --config " + ms_cfg +
                " --trials 2 --seed 42 >/dev/null 2>&1"),
            0);

  const std::string fs_cfg = tmp_path("fs_small.cfg");
  spit(fs_cfg,
       "n_min = 4096\nn_max = 8192\nbudget_n = 8192\ncapacity = 2048\nblock = 16\n");
  EXPECT_EQ(run(kBin + " run-experiment funnel-scaling --config " + fs_cfg +
                " --trials 2 --seed 11 >/dev/null 2>&1"),
            0);

  EXPECT_EQ(run(kBin + " run-experiment transpose-cost --config " + kConfigs +
                "/transpose-cost.cfg >/dev/null 2>&1"),
            0);
  EXPECT_EQ(run(kBin + " run-experiment conflict-bound --trials 500 >/dev/null 2>&1"), 0);
}

}  // namespace
