#include "cachelab/config.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <string>

namespace cachelab {
namespace {

TEST(ConfigTest, ParsesGlobalsCommentsAndWhitespace) {
  const Config cfg = Config::parse_text(
      "# a comment\n"
      "\n"
      "  n = 4096  \n"
      "label = twelve wide\n"
      "\t# indented comment\n"
      "k=8\n");
  EXPECT_TRUE(cfg.has("n"));
  EXPECT_FALSE(cfg.has("absent"));
  EXPECT_EQ(cfg.u64("n", 0), 4096u);
  EXPECT_EQ(cfg.u64("k", 0), 8u);
  EXPECT_EQ(cfg.str("label"), "twelve wide");
  EXPECT_EQ(cfg.str("absent", "fallback"), "fallback");
  EXPECT_EQ(cfg.u64("absent", 7), 7u);
  EXPECT_EQ(cfg.level_count(), 0u);
}

TEST(ConfigTest, GlobalsEchoPreservesInsertionOrder) {
  const Config cfg = Config::parse_text("zeta = 1\nalpha = 2\nmu = 3\n");
  ASSERT_EQ(cfg.globals().size(), 3u);
  EXPECT_EQ(cfg.globals()[0].first, "zeta");
  EXPECT_EQ(cfg.globals()[1].first, "alpha");
  EXPECT_EQ(cfg.globals()[2].first, "mu");
}

TEST(ConfigTest, BuildsHierarchyFromLevelSections) {
  const Config cfg = Config::parse_text(
      "[level]\n"
      "capacity = 512\n"
      "block = 8\n"
      "latency = 10\n"
      "[level]\n"
      "capacity = 4096\n"
      "block = 32\n"
      "ways = 4\n"
      "latency = 100\n");
  ASSERT_EQ(cfg.level_count(), 2u);
  const HierarchySpec h = cfg.hierarchy();
  ASSERT_EQ(h.levels.size(), 2u);
  EXPECT_EQ(h.levels[0].capacity, 512u);
  EXPECT_EQ(h.levels[0].block, 8u);
  EXPECT_EQ(h.levels[0].ways, 1u);  // default
  EXPECT_EQ(h.levels[0].latency, 10u);
  EXPECT_EQ(h.levels[1].ways, 4u);
  EXPECT_EQ(h.levels[1].latency, 100u);
}

TEST(ConfigTest, LatencyAndWaysDefaultWhenOmitted) {
  const Config cfg = Config::parse_text("[level]\ncapacity = 256\nblock = 16\n");
  const HierarchySpec h = cfg.hierarchy();
  EXPECT_EQ(h.levels[0].ways, 1u);
  EXPECT_EQ(h.levels[0].latency, 1u);
}

TEST(ConfigTest, LevelEchoShowsRawValuesAndDashForOmitted) {
  const Config cfg = Config::parse_text(
      "[level]\ncapacity = 256\nblock = 64\nways = 4\nlatency = 50\n"
      "[level]\ncapacity = 4096\nblock = 32\n");
  const auto echo = cfg.level_echo();
  ASSERT_EQ(echo.size(), 2u);
  EXPECT_EQ(echo[0], "256/64/4/50");
  EXPECT_EQ(echo[1], "4096/32/-/-");
}

TEST(ConfigTest, GlobalKeysStayOutsideLevelScopes) {
  const Config cfg = Config::parse_text(
      "capacity = 999\n"
      "[level]\ncapacity = 256\nblock = 16\n");
  EXPECT_EQ(cfg.u64("capacity", 0), 999u);
  EXPECT_EQ(cfg.hierarchy().levels[0].capacity, 256u);
}

TEST(ConfigTest, RejectsMalformedInput) {
  try {
    (void)Config::parse_text("n = 1\n[cache]\n");
    FAIL() << "unknown section accepted";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("[cache]"), std::string::npos);
  }
  try {
    (void)Config::parse_text("n = 1\nn = 2\n");
    FAIL() << "duplicate global accepted";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("duplicate"), std::string::npos);
  }
  EXPECT_THROW((void)Config::parse_text("[level]\nblock = 8\nblock = 16\n"), ConfigError);
  EXPECT_THROW((void)Config::parse_text("just words\n"), ConfigError);
  EXPECT_THROW((void)Config::parse_text("= 5\n"), ConfigError);
}

TEST(ConfigTest, RejectsNonNumericIntegerValues) {
  const Config cfg = Config::parse_text("n = twelve\nm = 12x\nneg = -3\n");
  try {
    (void)cfg.u64("n", 0);
    FAIL() << "accepted 'twelve'";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("'n'"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("twelve"), std::string::npos);
  }
  EXPECT_THROW((void)cfg.u64("m", 0), ConfigError);
  EXPECT_THROW((void)cfg.u64("neg", 0), ConfigError);
}

TEST(ConfigTest, HierarchyErrorsNameTheProblem) {
  EXPECT_THROW((void)Config{}.hierarchy(), ConfigError);
  EXPECT_THROW((void)Config::parse_text("[level]\nblock = 8\n").hierarchy(), ConfigError);
  EXPECT_THROW((void)Config::parse_text("[level]\ncapacity = 64\n").hierarchy(), ConfigError);
  try {
    // capacity below three blocks fails hierarchy validation, not parsing
    (void)Config::parse_text("[level]\ncapacity = 16\nblock = 8\n").hierarchy();
    FAIL() << "undersized level accepted";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("invalid hierarchy"), std::string::npos);
  }
}

TEST(ConfigTest, LoadsFromFileAndRejectsMissingPath) {
  const std::string path = ::testing::TempDir() + "config_test_sample.cfg";
  {
    std::ofstream f(path);
    f << "n = 17\n[level]\ncapacity = 256\nblock = 16\n";
  }
  const Config cfg = Config::load(path);
  EXPECT_EQ(cfg.u64("n", 0), 17u);
  EXPECT_EQ(cfg.level_count(), 1u);
  std::remove(path.c_str());
  EXPECT_THROW((void)Config::load(path), ConfigError);
}

}  // namespace
}  // namespace cachelab
