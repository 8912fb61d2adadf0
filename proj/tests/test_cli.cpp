/*
 * Copyright 2026 The A3D-MoE Simulator Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


// End-to-end checks of the a3dsim binary: exit codes, output files and the
// comparison CSV contract.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kBin = A3DSIM_PATH;
const std::string kSrc = SOURCE_DIR;

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("a3dsim_test_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  Result run(const std::string& args) {
    const auto o = dir_ / "stdout.txt", e = dir_ / "stderr.txt";
    const std::string cmd = kBin + " " + args + " >" + o.string() + " 2>" + e.string();
    const int st = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    r.out = slurp(o);
    r.err = slurp(e);
    return r;
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  static std::string config(const std::string& name) { return kSrc + "/configs/" + name; }

  fs::path dir_;
};

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string c;
    while (std::getline(ls, c, ',')) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_F(Cli, RunExampleWritesAllFields) {
  const auto r = run("run --config " + config("example.conf") + " --out " + path("m.json"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(slurp(path("m.json")));
  for (const char* k : {"config_id", "policy", "hardware", "seed", "cooling", "tbt_p99_s", "tbt_samples_s", "ttft_s",
                        "throughput_tps", "makespan_s", "energy_pj", "energy_breakdown_pj", "avg_power_w", "throttle",
                        "dram_accesses", "generated_at"})
    EXPECT_TRUE(j.contains(k)) << k;
  const auto csv = parse_csv(slurp(path("m.csv")));
  ASSERT_EQ(csv.size(), 2u);
  EXPECT_EQ(csv[0], (std::vector<std::string>{"config_id", "policy", "tbt_p99_ms", "throughput_tps", "energy_mj",
                                              "dram_accesses", "throttle"}));
  EXPECT_EQ(csv[1][0], j["config_id"].get<std::string>());
  EXPECT_NE(r.out.find("tbt_p99="), std::string::npos);
  for (const auto& e : fs::directory_iterator(dir_)) EXPECT_EQ(e.path().string().find(".tmp."), std::string::npos);
}

TEST_F(Cli, MissingConfigIsExit2NamingThePath) {
  const auto r = run("run --config /nonexistent/cfg.conf --out " + path("m.json"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("/nonexistent/cfg.conf"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(path("m.json")));
}

TEST_F(Cli, BadKeysAndFlagsAreExit2) {
  EXPECT_EQ(run("run --config " + config("example.conf") + " --set bogus.key=1 --out " + path("m.json")).code, 2);
  EXPECT_EQ(run("run --config " + config("example.conf") + " --set workload.num_requests=x --out " + path("m.json")).code,
            2);
  EXPECT_EQ(run("run --config " + config("example.conf") + " --policy fastest --out " + path("m.json")).code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("compare --preset a3d1 --preset nosuch --out " + path("c")).code, 2);
}

TEST_F(Cli, CapacityOverflowIsExit3) {
  const auto r = run("run --config " + config("example.conf") +
                     " --set hardware.memory.hbm_capacity=1073741824 --out " + path("m.json"));
  EXPECT_EQ(r.code, 3) << r.err;
}

TEST_F(Cli, SeedRunsAreByteIdentical) {
  const std::string base = "run --config " + config("example.conf") + " --seed 7 --no-timestamp --out ";
  ASSERT_EQ(run(base + path("a.json")).code, 0);
  ASSERT_EQ(run(base + path("b.json")).code, 0);
  EXPECT_EQ(slurp(path("a.json")), slurp(path("b.json")));
  EXPECT_EQ(nlohmann::json::parse(slurp(path("a.json")))["seed"], 7);
}

TEST_F(Cli, IdentityComparisonIsAllOnes) {
  const auto r = run("compare --preset a3d1 --preset a3d1 --workload " + config("example.conf") + " --out " + path("c"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto csv = parse_csv(slurp(path("c/comparison.csv")));
  ASSERT_EQ(csv.size(), 3u);
  EXPECT_EQ(csv[2][0], "a3d1#2");
  for (std::size_t row = 1; row < 3; ++row)
    for (std::size_t c = 10; c < 14; ++c) EXPECT_EQ(csv[row][c], "1.000000") << csv[0][c];
  EXPECT_TRUE(fs::exists(path("c/a3d1.json")));
  EXPECT_TRUE(fs::exists(path("c/a3d1_2.json")));
}

TEST_F(Cli, ComparisonMatchesGoldenFile) {
  const auto r = run("compare --preset a3d1:hrofs --preset a3d1:conventional --preset duplex --preset neupim "
                     "--workload " + config("example.conf") + " --no-timestamp --out " + path("c"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(path("c/comparison.csv")), slurp(kSrc + "/tests/golden/compare_example.csv"));
}

TEST_F(Cli, RatiosRecomputeFromPrintedValues) {
  ASSERT_EQ(run("compare --preset a3d1:hrofs --preset duplex --workload " + config("example.conf") + " --out " +
                path("c")).code, 0);
  const auto csv = parse_csv(slurp(path("c/comparison.csv")));
  for (std::size_t c = 5; c < 9; ++c) {
    const double ratio = std::stod(csv[2][c]) / std::stod(csv[1][c]);
    EXPECT_NEAR(std::stod(csv[2][c + 5]), ratio, 5e-7) << csv[0][c];
  }
}

TEST_F(Cli, CoolingBothGivesCapRatioWhenPowerBound) {
  const auto r = run("compare --preset a3d1 --cooling both --workload " + config("example.conf") +
                     " --set hardware.power_cap.cooled=20 --set hardware.power_cap.uncooled=8 --out " + path("c"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto csv = parse_csv(slurp(path("c/comparison.csv")));
  ASSERT_EQ(csv.size(), 3u);
  EXPECT_EQ(csv[1][0], "a3d1/cooling-on");
  EXPECT_EQ(csv[2][4], "off");
  EXPECT_NEAR(std::stod(csv[2][10]), 20.0 / 8.0, 0.01 * 2.5);
  EXPECT_EQ(csv[2][12], "1.000000");
}

TEST_F(Cli, CodecRoundtripPasses) {
  const auto r = run("codec roundtrip --out " + path("rt.json"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("65536/65536 exact reassemblies"), std::string::npos) << r.out;
  EXPECT_TRUE(nlohmann::json::parse(slurp(path("rt.json")))["pass"].get<bool>());
}

TEST_F(Cli, CodecProfileGaussianCoverage) {
  const auto r = run("codec profile --gaussian 1000000 --sigma 0.02 --out " + path("w.map"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(slurp(path("w.map.json")));
  EXPECT_GE(j["coverage"].get<double>(), 0.998);
  EXPECT_EQ(slurp(path("w.map")).substr(0, 4), "A3DM");
}

TEST_F(Cli, CodecProfileEmptyFileIsExit2) {
  std::ofstream(path("empty.bin")).close();
  EXPECT_EQ(run("codec profile --weights " + path("empty.bin") + " --out " + path("w.map")).code, 2);
  std::ofstream(path("odd.bin")) << "abc";
  EXPECT_EQ(run("codec profile --weights " + path("odd.bin") + " --out " + path("w.map")).code, 2);
  EXPECT_FALSE(fs::exists(path("w.map")));
}

TEST_F(Cli, CodecProfileFromFile) {
  {
    std::ofstream f(path("w.bin"), std::ios::binary);
    for (int i = 0; i < 1000; ++i) {
      const unsigned char lo = 0x80, hi = 0x3F;  // 1.0 in BF16
      f.put(char(lo)).put(char(hi));
    }
  }
  const auto r = run("codec profile --weights " + path("w.bin") + " --out " + path("w.map"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(slurp(path("w.map.json")));
  EXPECT_EQ(j["coverage"].get<double>(), 1.0);
  EXPECT_EQ(j["outliers"].get<int>(), 0);
}
