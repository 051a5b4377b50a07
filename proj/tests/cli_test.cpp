// Runs the built command-line binary end to end.

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "varshap/io.hpp"

#ifndef VARSHAP_CLI_PATH
#error "VARSHAP_CLI_PATH must name the varshap binary"
#endif

namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t lines(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("varshap_cli_" + std::string(info->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  /// Exit status of the binary; stderr goes to err.txt in the scratch dir.
  int run(const std::string& args) {
    const std::string cmd = std::string(VARSHAP_CLI_PATH) + " " + args + " >" +
                            (dir_ / "out.txt").string() + " 2>" + (dir_ / "err.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string err() const { return slurp(dir_ / "err.txt"); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

TEST_F(Cli, GenWritesRawDatasetAndNormalizationSidecar) {
  ASSERT_EQ(run("gen --dataset 1 --seed 3 --write " + path("d1.csv")), 0) << err();
  const auto ds = varshap::load_dataset(path("d1.csv"), std::string("Y"));
  EXPECT_EQ(ds.n(), 11000u);
  EXPECT_EQ(ds.d(), 2u);
  EXPECT_TRUE(fs::exists(path("d1.csv") + ".normalization.json"));
  EXPECT_EQ(run("gen --dataset 4 -o " + path("x.csv")), 2);
}

TEST_F(Cli, ExplainIsDeterministicAndValidatesFlags) {
  ASSERT_EQ(run("gen --dataset 1 -o " + path("d1.csv")), 0) << err();
  const std::string base = "explain --gtm dataset1 --data " + path("d1.csv") +
                           " --instance 0,0 --method varshap --sigma 0.6 --samples 500 --seed 42";
  ASSERT_EQ(run(base + " -o " + path("a.json") + " --svg " + path("a.svg")), 0) << err();
  ASSERT_EQ(run(base + " -o " + path("b.json")), 0) << err();
  EXPECT_EQ(slurp(path("a.json")), slurp(path("b.json")));
  const auto a = varshap::attribution_from_json(varshap::json::parse(slurp(path("a.json"))));
  EXPECT_EQ(a.d(), 2u);
  EXPECT_EQ(a.method, "varshap");
  EXPECT_NE(slurp(path("a.svg")).find("<svg"), std::string::npos);

  EXPECT_EQ(run("explain --gtm dataset1 --data " + path("d1.csv") +
                " --instance 0,0 --method varshap --sigma -1 -o " + path("c.json")),
            2);
  EXPECT_NE(err().find("--sigma"), std::string::npos) << err();
  EXPECT_EQ(run("explain --gtm dataset1 --data " + path("d1.csv") + " --method lime -o " +
                path("c.json")),
            2);
  EXPECT_EQ(run("explain --gtm dataset1 --data " + path("missing.csv") +
                " --instance 0,0 --method lime -o " + path("c.json")),
            2);
  EXPECT_EQ(run("frobnicate"), 2);
}

TEST_F(Cli, ComputeFailureExitsThree) {
  ASSERT_EQ(run("gen --dataset 3 -o " + path("d3.csv")), 0) << err();
  EXPECT_EQ(run("explain --gtm dataset3 --data " + path("d3.csv") +
                " --instance-index 5 --method lime --kernel-width 1e-9 -o " + path("l.json")),
            3);
  EXPECT_FALSE(err().empty());
}

TEST_F(Cli, MetricsReportHasNineRows) {
  ASSERT_EQ(run("gen --dataset 3 -o " + path("d3.csv")), 0) << err();
  ASSERT_EQ(run("explain --gtm dataset3 --data " + path("d3.csv") +
                " --instance-index 9000 --method kernelshap --baseline data --n-background 50 "
                "-o " +
                path("k.json")),
            0)
      << err();
  ASSERT_EQ(run("metrics --gtm dataset3 --data " + path("d3.csv") + " --attribution " +
                path("k.json") + " -o " + path("m.csv")),
            0)
      << err();
  const auto csv = slurp(path("m.csv"));
  EXPECT_EQ(lines(csv), 10u);
  EXPECT_EQ(csv.rfind("metric_name,method,model,dataset,instance_index,score,flagged", 0), 0u);
  ASSERT_EQ(run("metrics --gtm dataset3 --data " + path("d3.csv") + " --attribution " +
                path("k.json") + " --perturb-baseline black -o " + path("mb.csv")),
            0)
      << err();
  EXPECT_NE(slurp(path("mb.csv")).find("faithfulness_correlation_black"), std::string::npos);
}

TEST_F(Cli, CasestudyOutputsAndBadCase) {
  ASSERT_EQ(run("casestudy --case 2 --samples 2000 -o " + dir_.string()), 0) << err();
  const auto csv = slurp(path("casestudy2.csv"));
  EXPECT_EQ(csv.rfind("dataset,method,feature,phi", 0), 0u);
  EXPECT_TRUE(fs::exists(path("casestudy2.svg")));
  EXPECT_EQ(run("casestudy --case 3 -o " + dir_.string()), 2);
}

TEST_F(Cli, BenchmarkWritesScoresAndRanking) {
  std::ofstream(path("cfg.json")) << R"({
    "methods": ["varshap_sigma_0.6", "kernelshap_zero", "lime_sparsity_0.5"],
    "models": ["gtm:dataset3"],
    "datasets": ["dataset3"],
    "n_instances": 2,
    "varshap_samples": 200,
    "metric_cfg": {"runs": 10}
  })";
  ASSERT_EQ(run("benchmark -c " + path("cfg.json") + " -o " + path("out")), 0) << err();
  EXPECT_EQ(lines(slurp(path("out/scores.csv"))), 1u + 3u * 2u * 9u);
  EXPECT_EQ(lines(slurp(path("out/ranking.csv"))), 4u);
  for (const char* f : {"ranking.json", "ranking.svg", "attributions.svg"}) {
    EXPECT_TRUE(fs::exists(path("out/") + f)) << f;
  }
  const auto first = slurp(path("out/scores.csv"));
  ASSERT_EQ(run("benchmark -c " + path("cfg.json") + " -o " + path("out2")), 0) << err();
  EXPECT_EQ(slurp(path("out2/scores.csv")), first);

  std::ofstream(path("bad.json")) << R"({"n_instances": 0})";
  EXPECT_EQ(run("benchmark -c " + path("bad.json") + " -o " + path("out3")), 2);
}

}  // namespace
