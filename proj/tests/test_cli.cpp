#include "deepc/cli.hpp"

#include "deepc/experiment_harness.hpp"
#include "deepc/io_util.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <filesystem>
#include <sstream>

namespace deepc {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result cli(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  Result r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::vector<std::string> column(const fs::path& csv, std::string_view name) {
  const io::CsvTable t = io::read_csv(csv);
  std::vector<std::string> out;
  for (const auto& row : t.rows) out.push_back(row.at(t.column(name)));
  return out;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("deepc_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    config_ = dir_ / "lti.json";
    const json config = {
        {"experiment",
         {{"name", "small"},
          {"plant", "lti"},
          {"duration_s", 3.0},
          {"strategies", {"contextual", "random", "full"}},
          {"n_s_values", {20, 40}},
          {"seeds", {0, 1, 2}}}},
        {"data", {{"duration_s", 30.0}}},
        {"noise", {{"sigma_output", 0.01}}},
    };
    io::write_file_atomically(config_, config.dump(2));
  }
  void TearDown() override { fs::remove_all(dir_); }

  [[nodiscard]] std::vector<std::string> base(const std::string& command, const std::string& out) const {
    return {command, "--config", config_.string(), "--out", (dir_ / out).string(), "--jobs", "1"};
  }

  fs::path dir_;
  fs::path config_;
};

TEST_F(Cli, UsageErrorsExitWithTwo) {
  EXPECT_EQ(cli({}).code, kExitUsage);
  EXPECT_EQ(cli({"bogus"}).code, kExitUsage);
  EXPECT_EQ(cli({"sweep"}).code, kExitUsage);
  EXPECT_EQ(cli({"sweep", "--config", config_.string(), "--jobs", "0"}).code, kExitUsage);
  EXPECT_EQ(cli({"--help"}).code, kExitSuccess);
}

TEST_F(Cli, MissingConfigNamesThePath) {
  const Result r = cli({"collect", "--config", (dir_ / "nowhere.json").string(), "--out", dir_.string()});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("nowhere.json"), std::string::npos);
}

TEST_F(Cli, InvalidConfigsExitWithTwo) {
  io::write_file_atomically(dir_ / "broken.json", "{\n  \"experiment\": {\n    \"plant\": lti\n  }\n}");
  const Result broken = cli({"collect", "--config", (dir_ / "broken.json").string(), "--out", dir_.string()});
  EXPECT_EQ(broken.code, kExitUsage);
  EXPECT_NE(broken.err.find("broken.json:3:"), std::string::npos) << broken.err;

  auto args = base("collect", "c");
  args.insert(args.end(), {"--set", "controller.horizon=soon"});
  const Result mistyped = cli(args);
  EXPECT_EQ(mistyped.code, kExitUsage);
  EXPECT_NE(mistyped.err.find("controller.horizon"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir_ / "c"));
}

TEST_F(Cli, CollectIsDeterministicAndReportsExcitation) {
  const Result a = cli(base("collect", "a"));
  const Result b = cli(base("collect", "b"));
  ASSERT_EQ(a.code, kExitSuccess) << a.err;
  ASSERT_EQ(b.code, kExitSuccess) << b.err;
  EXPECT_NE(a.out.find("persistently exciting of order 18: yes"), std::string::npos) << a.out;
  EXPECT_NE(a.out.find("dataset sigma_min: "), std::string::npos);
  EXPECT_EQ(io::read_file(dir_ / "a" / "dataset" / "small_0.csv"), io::read_file(dir_ / "b" / "dataset" / "small_0.csv"));
  EXPECT_EQ(io::read_file(dir_ / "a" / "dataset" / "small.json"), io::read_file(dir_ / "b" / "dataset" / "small.json"));
}

TEST_F(Cli, OverrideIsReflectedInManifest) {
  auto args = base("collect", "c");
  args.insert(args.end(), {"--set", "noise.sigma_v=0", "--set", "noise.sigma_output=0.5"});
  ASSERT_EQ(cli(args).code, kExitSuccess);
  const json manifest = json::parse(io::read_file(dir_ / "c" / "manifest.json"));
  EXPECT_EQ(manifest["config"]["noise"]["sigma_v"], 0.0);
  EXPECT_EQ(manifest["config"]["noise"]["sigma_output"], 0.5);
}

TEST_F(Cli, SweepProducesEveryCellAndRefusesReuse) {
  auto args = base("sweep", "s");
  args.insert(args.end(), {"--seeds", "2"});
  const Result r = cli(args);
  ASSERT_EQ(r.code, kExitSuccess) << r.out << r.err;
  const fs::path runs = dir_ / "s" / "runs" / "small";
  std::size_t files = 0;
  std::size_t full = 0;
  for (const auto& e : fs::directory_iterator(runs)) {
    ++files;
    if (e.path().filename().string().starts_with("full_")) ++full;
  }
  EXPECT_EQ(files, 2u * 2u * 2u + 2u);
  EXPECT_EQ(full, 2u);
  const std::vector<CellSummary> summary = read_summary_csv(dir_ / "s" / "summary.csv");
  ASSERT_EQ(summary.size(), 5u);
  for (const CellSummary& s : summary) {
    EXPECT_EQ(s.seed_count, 2);
    EXPECT_EQ(s.failures, 0);
  }

  const Result again = cli(args);
  EXPECT_EQ(again.code, kExitUsage);
  EXPECT_NE(again.err.find("--force"), std::string::npos);
  args.push_back("--force");
  EXPECT_EQ(cli(args).code, kExitSuccess);
}

TEST_F(Cli, SeedsFlagGivesOneSeedPerCell) {
  auto args = base("sweep", "s");
  args.insert(args.end(), {"--seeds", "1", "--set", "experiment.strategies=[\"random\"]"});
  ASSERT_EQ(cli(args).code, kExitSuccess);
  const std::vector<CellSummary> summary = read_summary_csv(dir_ / "s" / "summary.csv");
  ASSERT_EQ(summary.size(), 2u);
  for (const CellSummary& s : summary) EXPECT_EQ(s.seed_count, 1);
}

TEST_F(Cli, ManifestReproducesTheSweep) {
  auto args = base("sweep", "first");
  args.insert(args.end(), {"--seeds", "1", "--set", "experiment.strategies=[\"contextual\"]"});
  ASSERT_EQ(cli(args).code, kExitSuccess);
  const fs::path manifest = dir_ / "first" / "manifest.json";
  ASSERT_EQ(cli({"sweep", "--config", manifest.string(), "--out", (dir_ / "second").string()}).code, kExitSuccess);
  for (const char* cell : {"contextual_ns20_seed0.csv", "contextual_ns40_seed0.csv"}) {
    const fs::path a = dir_ / "first" / "runs" / "small" / cell;
    const fs::path b = dir_ / "second" / "runs" / "small" / cell;
    EXPECT_EQ(column(a, "e_t"), column(b, "e_t")) << cell;
    EXPECT_EQ(column(a, "u_0"), column(b, "u_0")) << cell;
  }
  const json m1 = json::parse(io::read_file(manifest));
  const json m2 = json::parse(io::read_file(dir_ / "second" / "manifest.json"));
  EXPECT_EQ(m1["config"], m2["config"]);
}

TEST_F(Cli, InputDatasetIsNeverModified) {
  ASSERT_EQ(cli(base("collect", "data")).code, kExitSuccess);
  const fs::path manifest = dir_ / "data" / "dataset" / "small.json";
  const std::string before = io::read_file(dir_ / "data" / "dataset" / "small_0.csv");
  const auto stamp = fs::last_write_time(manifest);
  auto args = base("sweep", "data");
  args.insert(args.end(), {"--seeds", "1", "--force", "--set", "experiment.strategies=[\"random\"]", "--set",
                           "experiment.dataset=" + manifest.string()});
  const Result r = cli(args);
  ASSERT_EQ(r.code, kExitSuccess) << r.err;
  EXPECT_EQ(io::read_file(dir_ / "data" / "dataset" / "small_0.csv"), before);
  EXPECT_EQ(fs::last_write_time(manifest), stamp);
  const json m = json::parse(io::read_file(dir_ / "data" / "manifest.json"));
  EXPECT_EQ(m["dataset"]["manifest"], manifest.string());
}

TEST_F(Cli, FailedRunsExitWithOne) {
  auto args = base("run", "r");
  args.insert(args.end(), {"--strategy", "random", "--n-s", "20", "--set", "controller.qp.max_iter=1", "--set",
                           "controller.qp.polish=false"});
  const Result r = cli(args);
  EXPECT_EQ(r.code, kExitExperimentFailure) << r.out;
  EXPECT_NE(r.out.find("infeasible_abort"), std::string::npos);
  const std::vector<CellSummary> summary = read_summary_csv(dir_ / "r" / "summary.csv");
  ASSERT_EQ(summary.size(), 1u);
  EXPECT_EQ(summary[0].failures, 1);
}

TEST_F(Cli, ReportAfterRunHasOneGroup) {
  auto args = base("run", "r");
  args.insert(args.end(), {"--strategy", "contextual", "--n-s", "40", "--seed", "4"});
  ASSERT_EQ(cli(args).code, kExitSuccess);
  EXPECT_TRUE(fs::exists(dir_ / "r" / "runs" / "small" / "contextual_ns40_seed4.csv"));
  const Result r = cli({"report", (dir_ / "r").string(), "--out", (dir_ / "plots").string()});
  ASSERT_EQ(r.code, kExitSuccess) << r.err;
  const io::CsvTable box = io::read_csv(dir_ / "plots" / "boxplot_data.csv");
  ASSERT_FALSE(box.rows.empty());
  for (const auto& row : box.rows) {
    EXPECT_EQ(row[1], "contextual");
    EXPECT_EQ(row[2], "40");
    EXPECT_EQ(row[3], "4");
  }
  EXPECT_EQ(io::read_csv(dir_ / "plots" / "timing_table.csv").rows.size(), 1u);
}

TEST_F(Cli, ReportOnEmptyDirectoryFails) {
  fs::create_directories(dir_ / "empty");
  const Result r = cli({"report", (dir_ / "empty").string()});
  EXPECT_NE(r.code, kExitSuccess);
  EXPECT_NE(r.err.find("summary.csv"), std::string::npos);
}

TEST_F(Cli, GridsearchWritesOneRowPerPair) {
  auto args = base("gridsearch", "g");
  args.insert(args.end(),
              {"--seeds", "1", "--strategy", "random", "--n-s", "40", "--lambda-g", "0.001", "1", "--lambda-sigma", "100"});
  const Result r = cli(args);
  ASSERT_EQ(r.code, kExitSuccess) << r.err;
  EXPECT_NE(r.out.find("best: "), std::string::npos);
  const io::CsvTable t = io::read_csv(dir_ / "g" / "gridsearch.csv");
  EXPECT_EQ(t.header, (std::vector<std::string>{"lambda_g_bar", "lambda_sigma", "median_err", "failures"}));
  EXPECT_EQ(t.rows.size(), 2u);
}

}  // namespace
}  // namespace deepc
