// Copyright 2026 The OpenGC Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "opengc/cli.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "test_util.hpp"

namespace opengc {
namespace {

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult run(std::vector<std::string> args) {
  args.insert(args.begin(), "opengc");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string fixture(const std::string& name) {
  return (fs::path(OPENGC_TEST_DATA) / name).string();
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = testing::scratch_dir("cli");
    const CliResult r = run({"generate", "--preset", "tiny", "--out", (dir_ / "data").string(),
                       "--seed", "3"});
    ASSERT_EQ(r.code, 0) << r.err;
    std::ofstream(dir_ / "fast.cfg") << "# quick settings\nb=32\nmax_iters=10\n"
                                        "downstream_max_steps=200\n";
  }

  static std::string data() { return (dir_ / "data").string(); }
  static std::string cfg() { return (dir_ / "fast.cfg").string(); }

  static fs::path dir_;
};

fs::path CliTest::dir_;

TEST_F(CliTest, GenerateWritesDataset) {
  const TaskSequence seq = load_sequence(data());
  EXPECT_EQ(seq.num_tasks(), 3);
  EXPECT_EQ(seq.snapshots.back().num_nodes, 180u);
}

TEST_F(CliTest, CondenseDefaultOutput) {
  const CliResult r = run({"condense", "--data", data(), "--task", "2", "--ratio", "0.1", "--config",
                     cfg(), "--seed", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  const fs::path out = fs::path(data()) / "condensed_task2";
  const CondensedGraph g = read_condensed(out);
  EXPECT_EQ(g.task, 2);
  EXPECT_EQ(g.ratio, 0.1);
  EXPECT_EQ(g.num_nodes(), 12u);
  EXPECT_EQ(g.features.cols(), 8);
  std::ifstream meta(out / "meta.json");
  const auto j = nlohmann::json::parse(meta);
  EXPECT_EQ(j.at("ratio").get<double>(), 0.1);
  EXPECT_EQ(j.at("seed").get<std::uint64_t>(), 1u);
}

TEST_F(CliTest, CondenseRatioTooSmall) {
  const CliResult r = run({"condense", "--data", data(), "--task", "2", "--ratio", "0.01", "--out",
                     (dir_ / "small").string(), "--seed", "1"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("ratio too small"), std::string::npos);
}

TEST_F(CliTest, EvaluateThenReport) {
  const std::string metrics = (dir_ / "metrics.json").string();
  const CliResult r = run({"evaluate", "--data", data(), "--config", cfg(), "--ratio", "0.1", "--out",
                     metrics, "--seed", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("mAP\t"), std::string::npos);
  const CliResult rep = run({"report", "--metrics", metrics});
  ASSERT_EQ(rep.code, 0);
  EXPECT_EQ(rep.out, r.out);
  std::ifstream in(metrics);
  const auto j = nlohmann::json::parse(in);
  EXPECT_EQ(j.at("num_tasks").get<int>(), 3);
  EXPECT_EQ(j.at("seeds").at(0).get<std::uint64_t>(), 2u);
  EXPECT_TRUE(j.at("performance_matrix").at(1).at(0).is_null());
}

TEST_F(CliTest, EvaluateFromTaskOutOfRange) {
  const CliResult r = run({"evaluate", "--data", data(), "--from-task", "4", "--out",
                     (dir_ / "m4.json").string(), "--seed", "2"});
  EXPECT_EQ(r.code, 1);
}

TEST_F(CliTest, BadConfigKey) {
  std::ofstream(dir_ / "bad.cfg") << "learning_rate=1\n";
  const CliResult r = run({"condense", "--data", data(), "--task", "1", "--config",
                     (dir_ / "bad.cfg").string(), "--seed", "1"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("unknown config key"), std::string::npos);
}

TEST(CliReportTest, FixtureTsv) {
  const CliResult r = run({"report", "--metrics", fixture("metrics_fixture.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("mAP\t0.805556\n"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("1\t2\t0.500000\n"), std::string::npos);
}

TEST(CliReportTest, FixtureJson) {
  const CliResult r = run({"report", "--metrics", fixture("metrics_fixture.json"), "--format", "json"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_NEAR(j.at("map").get<double>(), 29.0 / 36.0, 1e-15);
}

TEST(CliUsageTest, UnknownFlag) {
  const CliResult r = run({"report", "--metrics", "x.json", "--bogus"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
}

TEST(CliUsageTest, MissingSubcommand) {
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"condense", "--data", "d", "--seed", "1"}).code, 1);
  EXPECT_EQ(run({"evaluate", "--data", "d", "--out", "o", "--seed", "1", "--openset", "osdn"})
                .code,
            1);
}

TEST(CliUsageTest, Help) {
  const CliResult r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("condense"), std::string::npos);
}

TEST(CliDataTest, MissingDataset) {
  const CliResult r = run({"condense", "--data", "/nonexistent/opengc", "--task", "1", "--seed", "1",
                     "--out", (fs::temp_directory_path() / "opengc_unused").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("data error"), std::string::npos);
}

TEST(CliDataTest, MissingMetrics) {
  EXPECT_EQ(run({"report", "--metrics", "/nonexistent/metrics.json"}).code, 2);
}

TEST(CliDataTest, BadLabel) {
  const CliResult r = run({"evaluate", "--data", fixture("path3_bad_label"), "--out",
                     (fs::temp_directory_path() / "opengc_unused.json").string(), "--seed", "1"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("label out of range"), std::string::npos);
}

TEST(EffectiveThreadsTest, EnvironmentCap) {
  ::setenv("OPENGC_THREADS", "2", 1);
  EXPECT_EQ(effective_threads(8), 2);
  EXPECT_EQ(effective_threads(1), 1);
  ::unsetenv("OPENGC_THREADS");
  EXPECT_EQ(effective_threads(4), 4);
  EXPECT_EQ(effective_threads(0), 1);
}

}  // namespace
}  // namespace opengc
