#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include "json.hpp"
#include <sstream>

#include "thinserve/cli.hpp"

namespace thinserve {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "thinserve");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("thinserve_cli_" +
            std::string(::testing::UnitTest::GetInstance()
                            ->current_test_info()
                            ->name()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string write(const std::string& name, const std::string& text) {
    const auto path = dir_ / name;
    std::ofstream(path) << text;
    return path.string();
  }
  std::string path(const std::string& name) const {
    return (dir_ / name).string();
  }
  static std::string read(const std::string& p) {
    std::ifstream in(p);
    return {std::istreambuf_iterator<char>(in), {}};
  }

  std::string resnet() {
    const auto p = path("resnet.csv");
    const auto r =
        run_cli({"grid", "-T", "16", "-n", "8", "--synth-out", p, "--model",
                 "resnet", "--base-ms", "76.5", "--parallel-fraction",
                 "0.9216", "--fixed-fraction", "0", "--batch-scaling", "1"});
    EXPECT_EQ(r.code, 0) << r.err;
    return p;
  }

  fs::path dir_;
};

TEST_F(CliTest, OptimizeTinyProfile) {
  const auto p = write("tiny.csv", "threads,batch,latency_ms\n1,1,10\n");
  const auto r = run_cli({"optimize", "-p", p, "-T", "1", "-B", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_EQ(j.at("groups"), json::parse(R"([{"i":1,"t":1,"b":1}])"));
  EXPECT_EQ(j.at("model"), "tiny");
}

TEST_F(CliTest, OptimizeSeveralBatchesKeepsOrder) {
  const auto p = write(
      "t.csv", "threads,batch,latency_ms\n1,1,10\n2,1,6\n1,2,18\n");
  const auto r =
      run_cli({"optimize", "-p", p, "-T", "2", "-B", "2", "-B", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  ASSERT_EQ(j.size(), 2u);
  EXPECT_EQ(j[0].at("B"), 2);
  EXPECT_EQ(j[0].at("expected_latency_ms"), 10.0);
  EXPECT_EQ(j[1].at("B"), 1);
  EXPECT_EQ(j[1].at("expected_latency_ms"), 6.0);
}

TEST_F(CliTest, OddBatchIsInfeasible) {
  const auto p =
      write("odd.csv", "threads,batch,latency_ms\n1,2,5\n2,2,3\n1,4,9\n");
  const auto r = run_cli({"optimize", "-p", p, "-T", "2", "-B", "3"});
  EXPECT_EQ(r.code, cli::kInfeasible);
  EXPECT_NE(r.err.find("infeasible"), std::string::npos);
}

TEST_F(CliTest, UsageAndInputErrors) {
  EXPECT_EQ(run_cli({}).code, cli::kUsage);
  EXPECT_EQ(run_cli({"optimize", "-T", "2"}).code, cli::kUsage);
  EXPECT_EQ(run_cli({"frobnicate"}).code, cli::kUsage);
  EXPECT_EQ(run_cli({"optimize", "-p", "x", "-T", "0", "-B", "1"}).code,
            cli::kUsage);
  EXPECT_EQ(run_cli({"optimize", "-p", path("missing.csv"), "-T", "1", "-B",
                     "1"})
                .code,
            cli::kInputError);
  const auto bad = write("bad.csv", "threads,batch,latency_ms\n1,1,-4\n");
  EXPECT_EQ(run_cli({"optimize", "-p", bad, "-T", "1", "-B", "1"}).code,
            cli::kInputError);
  EXPECT_EQ(run_cli({"gap", "-p", bad, "-T", "1", "-B", "1",
                     "--interference", "cache"})
                .code,
            cli::kUsage);
}

TEST_F(CliTest, GridSizes) {
  const auto r = run_cli({"grid", "-T", "16", "-n", "10"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_EQ(j.at("grid_size"), 176);
  EXPECT_EQ(j.at("exhaustive_size"), 16384);
}

TEST_F(CliTest, GapModels) {
  const auto p = resnet();
  auto gap = [&](const std::string& kind) {
    const auto r = run_cli({"gap", "-p", p, "-T", "16", "-B", "256",
                            "--interference", kind});
    EXPECT_EQ(r.code, 0) << r.err;
    return json::parse(r.out);
  };
  const auto none = gap("none");
  const auto down = gap("downclock");
  const auto both = gap("both");
  EXPECT_EQ(none.at("gap_fraction"), 0.0);
  EXPECT_NEAR(none.at("expected_ms").get<double>(), 1224.0, 1e-6);
  EXPECT_NEAR(both.at("adjusted_ms").get<double>(), 1600.0, 80.0);
  EXPECT_GT(down.at("adjusted_ms").get<double>(),
            none.at("adjusted_ms").get<double>());
  EXPECT_LT(down.at("adjusted_ms").get<double>(),
            both.at("adjusted_ms").get<double>());
}

TEST_F(CliTest, GapWithCustomCurve) {
  const auto p = resnet();
  const auto curve = write(
      "curve.csv", "bandwidth_gbps,latency_multiplier\n0,1\n100,3\n");
  const auto r = run_cli({"gap", "-p", p, "-T", "16", "-B", "256",
                          "--interference", "memory", "--curve", curve});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NEAR(json::parse(r.out).at("factor").get<double>(), 1.9, 1e-12);
}

TEST_F(CliTest, SimulateTimelineIsReproducible) {
  const auto p = resnet();
  auto simulate = [&](const std::string& timeline) {
    return run_cli({"simulate", "-p", p, "--rate", "40", "--duration", "4",
                    "--seed", "3", "--batch-timeout-ms", "50",
                    "--initial-batch", "4", "--timeline", timeline, "--out",
                    path("summary.json")});
  };
  ASSERT_EQ(simulate(path("a.csv")).code, 0);
  ASSERT_EQ(simulate(path("b.csv")).code, 0);
  const auto a = read(path("a.csv"));
  EXPECT_EQ(a, read(path("b.csv")));
  EXPECT_EQ(a.substr(0, a.find('\n')),
            "time_ms,batch_latency_ms,phase,active_config");
  const auto summary = json::parse(read(path("summary.json")));
  EXPECT_EQ(summary.at("dropped"), 0);
  EXPECT_EQ(summary.at("completed"), summary.at("requests"));
}

TEST_F(CliTest, StepTraceTimelineWalksThePhases) {
  const auto p = path("stepnet.csv");
  ASSERT_EQ(run_cli({"grid", "-T", "16", "-n", "6", "--synth-out", p,
                     "--parallel-fraction", "0.9", "--fixed-fraction", "0.6",
                     "--batch-scaling", "0.8"})
                .code,
            0);
  const auto r = run_cli({"simulate", "-p", p, "--rate", "32", "--step-at",
                          "8", "--step-rate", "256", "--duration", "20",
                          "--batch-timeout-ms", "500", "--timeline", "-",
                          "--out", path("summary.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream rows(r.out);
  std::string row;
  std::getline(rows, row);
  std::vector<std::string> walk;
  while (std::getline(rows, row)) {
    const auto first = row.find(',');
    const auto second = row.find(',', first + 1);
    const auto third = row.find(',', second + 1);
    const auto phase = row.substr(second + 1, third - second - 1);
    if (walk.empty() || walk.back() != phase) walk.push_back(phase);
  }
  EXPECT_EQ(walk, (std::vector<std::string>{
                      "BatchEstimation", "PassiveScaleUp", "DualActive",
                      "PassiveScaleDown", "BatchEstimation"}));
  const auto summary = json::parse(read(path("summary.json")));
  EXPECT_EQ(summary.at("reconfigurations"), 1);
}

TEST_F(CliTest, SteadyTraceDoesNotReconfigure) {
  const auto p = resnet();
  const auto r = run_cli({"simulate", "-p", p, "--rate", "20", "--duration",
                          "20", "--initial-batch", "16",
                          "--batch-timeout-ms", "1000"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(json::parse(r.out).at("reconfigurations"), 0);
}

TEST_F(CliTest, SimulateFromTraceFile) {
  const auto p = write("m.csv", "threads,batch,latency_ms\n1,1,10\n");
  const auto trace = write("trace.csv", "timestamp_ms\n0\n5\n50.5\n");
  const auto r = run_cli({"simulate", "-p", p, "--trace", trace, "--topology",
                          "1x1", "--initial-batch", "1", "--no-reconfig"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_EQ(j.at("completed"), 3);
  EXPECT_EQ(j.at("reconfigurations"), 0);
  // --trace and --rate are exclusive.
  EXPECT_EQ(run_cli({"simulate", "-p", p, "--trace", trace, "--rate", "5"})
                .code,
            cli::kUsage);
  const auto unsorted = write("bad_trace.csv", "timestamp_ms\n5\n1\n");
  EXPECT_EQ(run_cli({"simulate", "-p", p, "--trace", unsorted}).code,
            cli::kInputError);
}

TEST_F(CliTest, ConfigFileSuppliesFlags) {
  const auto p = write(
      "t.csv", "threads,batch,latency_ms\n1,1,10\n2,1,6\n1,2,18\n");
  const auto config = write("run.ini", "[optimize]\nprofile=" + p +
                                           "\nthreads=2\nbatch=2\n");
  const auto r = run_cli({"--config", config, "optimize"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(json::parse(r.out).at("expected_latency_ms"), 10.0);
  // Flags win over the file.
  const auto flagged = run_cli({"--config", config, "optimize", "-B", "1"});
  ASSERT_EQ(flagged.code, 0) << flagged.err;
  EXPECT_EQ(json::parse(flagged.out).at("B"), 1);
}

}  // namespace
}  // namespace thinserve
