#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "kinwass/cli.hpp"
#include "kinwass/errors.hpp"
#include "kinwass/report.hpp"

namespace fs = std::filesystem;
using namespace kinwass;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "kinwass");
  std::ostringstream out, err;
  int code = run_command(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("kinwass_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string config(const std::string& name) {
  return std::string(KINWASS_SOURCE_DIR) + "/configs/" + name;
}

}  // namespace

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({}).code, kExitConfigError);
  auto r = run({"twin", "--bogus"});
  EXPECT_EQ(r.code, kExitConfigError);
  EXPECT_FALSE(r.err.empty());
  EXPECT_EQ(run({"nonsense"}).code, kExitConfigError);
  EXPECT_EQ(run({"verify-growth", "--family", "nope"}).code, kExitConfigError);
}

TEST(Cli, BadConfigIsRejected) {
  auto dir = scratch("badcfg");
  fs::create_directories(dir);
  std::ofstream(dir / "bad.toml") << "[simulation]\nd = 1\nwarp = 9\n";
  auto r = run({"twin", "--config", (dir / "bad.toml").string(), "--out", (dir / "o").string()});
  EXPECT_EQ(r.code, kExitConfigError);
  EXPECT_NE(r.err.find("warp"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "o"));
  EXPECT_EQ(run({"twin", "--config", (dir / "missing.toml").string(), "--out",
                 (dir / "o").string()})
                .code,
            kExitConfigError);
}

TEST(Cli, VerifyGrowthWritesReport) {
  auto dir = scratch("vg");
  auto r = run({"verify-growth", "--family", "orlicz", "--alpha", "2", "--p", "2", "--d", "2",
                "--out", dir.string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  auto j = nlohmann::json::parse(slurp(dir / "verify_growth.json"));
  EXPECT_TRUE(j.is_object());
  EXPECT_TRUE(fs::exists(dir / RunDirectory::kMarker));
}

TEST(Cli, TwinReplayIsByteIdentical) {
  auto a = scratch("twin_a"), b = scratch("twin_b");
  ASSERT_EQ(run({"twin", "--config", config("twin_small.toml"), "--out", a.string()}).code,
            kExitOk);
  ASSERT_EQ(run({"twin", "--config", config("twin_small.toml"), "--out", b.string()}).code,
            kExitOk);
  for (const char* f : {"stability.csv", "stability.json", "stability.svg"})
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  // a rerun into the same directory replaces it
  ASSERT_EQ(run({"twin", "--config", config("twin_small.toml"), "--out", a.string()}).code,
            kExitOk);
  EXPECT_EQ(slurp(a / "stability.csv"), slurp(b / "stability.csv"));
  // a different seed changes the header line
  auto c = scratch("twin_c");
  ASSERT_EQ(run({"twin", "--config", config("twin_small.toml"), "--out", c.string(), "--seed",
                 "8"})
                .code,
            kExitOk);
  EXPECT_NE(slurp(a / "stability.csv"), slurp(c / "stability.csv"));
}

TEST(Cli, BoundsCommand) {
  auto dir = scratch("bounds");
  auto r = run({"bounds", "--config", config("bounds_orlicz2.toml"), "--out", dir.string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_TRUE(fs::exists(dir / "bounds.csv"));
  EXPECT_TRUE(fs::exists(dir / "bounds.svg"));
}

TEST(RunDirectoryTest, RefusesUnmarkedDirectory) {
  auto dir = scratch("unmarked");
  fs::create_directories(dir);
  std::ofstream(dir / "precious.txt") << "keep";
  EXPECT_THROW(RunDirectory rd(dir), ConfigError);
  EXPECT_EQ(slurp(dir / "precious.txt"), "keep");
  auto r = run({"verify-growth", "--out", dir.string()});
  EXPECT_EQ(r.code, kExitConfigError);
  EXPECT_EQ(slurp(dir / "precious.txt"), "keep");
}

TEST(RunDirectoryTest, UncommittedLeavesNothing) {
  auto dir = scratch("uncommitted");
  fs::path staging;
  {
    RunDirectory rd(dir);
    rd.write("a.txt", "x");
    staging = rd.staging();
    EXPECT_TRUE(fs::exists(staging / "a.txt"));
  }
  EXPECT_FALSE(fs::exists(staging));
  EXPECT_FALSE(fs::exists(dir));
}
