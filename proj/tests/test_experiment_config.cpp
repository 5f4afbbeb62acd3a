#include "deepc/experiment_config.hpp"

#include "deepc/error.hpp"
#include "deepc/io_util.hpp"
#include "deepc/report.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>

namespace deepc {
namespace {

using nlohmann::json;

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
    return e.what();
  }
  ADD_FAILURE() << "no error raised";
  return {};
}

// ---------------------------------------------------------------------------
// Config

class ConfigRoundTrip : public ::testing::TestWithParam<PlantKind> {};

TEST_P(ConfigRoundTrip, DefaultsSurviveJsonBitExactly) {
  const ExperimentConfig config = ExperimentConfig::defaults(GetParam());
  const json first = config_to_json(config);
  const json second = config_to_json(config_from_json(json::parse(first.dump())));
  EXPECT_EQ(first.dump(), second.dump());
}

INSTANTIATE_TEST_SUITE_P(Plants, ConfigRoundTrip,
                         ::testing::Values(PlantKind::vehicle, PlantKind::quadrotor, PlantKind::lti));

TEST(Config, EmptyObjectYieldsVehicleDefaults) {
  EXPECT_EQ(config_to_json(config_from_json(json::object())).dump(),
            config_to_json(ExperimentConfig::defaults(PlantKind::vehicle)).dump());
}

TEST(Config, PlantSelectsItsDefaults) {
  const ExperimentConfig config = config_from_json({{"experiment", {{"plant", "quadrotor"}}}});
  EXPECT_EQ(config_to_json(config).dump(), config_to_json(ExperimentConfig::defaults(PlantKind::quadrotor)).dump());
}

TEST(Config, NullBoundsAreInfinite) {
  json j = config_to_json(ExperimentConfig::defaults(PlantKind::vehicle));
  j["controller"]["input_lower"] = {nullptr, -0.4};
  j["controller"]["input_upper"] = {5.0, nullptr};
  const ExperimentConfig config = config_from_json(j);
  EXPECT_EQ(config.controller.input_bounds.lower(0), -std::numeric_limits<double>::infinity());
  EXPECT_EQ(config.controller.input_bounds.lower(1), -0.4);
  EXPECT_EQ(config.controller.input_bounds.upper(1), std::numeric_limits<double>::infinity());
  const json back = config_to_json(config);
  EXPECT_TRUE(back["controller"]["input_lower"][0].is_null());
  EXPECT_TRUE(back["controller"]["input_upper"][1].is_null());
}

TEST(Config, NullOutsideBoundsIsRejected) {
  const std::string msg = error_of([] {
    static_cast<void>(config_from_json({{"controller", {{"output_weights", {1.0, nullptr}}}}}));
  });
  EXPECT_NE(msg.find("controller.output_weights"), std::string::npos);
}

TEST(Config, UnknownKeysAreNamed) {
  EXPECT_NE(error_of([] { static_cast<void>(config_from_json({{"controller", {{"horizn", 3}}}})); })
                .find("controller.horizn"),
            std::string::npos);
  EXPECT_NE(error_of([] { static_cast<void>(config_from_json({{"extra", 1}})); }).find("'extra'"),
            std::string::npos);
  EXPECT_NE(error_of([] { static_cast<void>(config_from_json({{"controller", {{"qp", {{"rhoo", 1}}}}}})); })
                .find("controller.qp.rhoo"),
            std::string::npos);
}

TEST(Config, TypeMismatchesAreNamed) {
  EXPECT_NE(error_of([] { static_cast<void>(config_from_json({{"controller", {{"horizon", "ten"}}}})); })
                .find("controller.horizon"),
            std::string::npos);
  EXPECT_NE(error_of([] { static_cast<void>(config_from_json({{"controller", {{"horizon", 2.5}}}})); })
                .find("integer"),
            std::string::npos);
  EXPECT_NE(error_of([] { static_cast<void>(config_from_json({{"experiment", {{"strategies", {"greedy"}}}}})); })
                .find("experiment.strategies"),
            std::string::npos);
  EXPECT_NE(error_of([] { static_cast<void>(config_from_json({{"experiment", {{"plant", "boat"}}}})); })
                .find("experiment.plant"),
            std::string::npos);
  EXPECT_NE(error_of([] { static_cast<void>(config_from_json({{"experiment", {{"seeds", {-1}}}}})); })
                .find("experiment.seeds"),
            std::string::npos);
}

TEST(Config, ManifestIsAccepted) {
  ExperimentConfig config = ExperimentConfig::defaults(PlantKind::lti);
  config.duration_s = 3.5;
  const json manifest = {{"command", "sweep"}, {"config", config_to_json(config)}};
  EXPECT_EQ(config_to_json(config_from_json(manifest)).dump(), config_to_json(config).dump());
}

TEST(Override, ParsesJsonValues) {
  json j = json::object();
  apply_override(j, "noise.sigma_v=0");
  apply_override(j, "controller.qp.polish=false");
  apply_override(j, "experiment.n_s_values=[5,7]");
  apply_override(j, "controller.input_upper=[1,null]");
  EXPECT_EQ(j["noise"]["sigma_v"], 0);
  EXPECT_EQ(j["controller"]["qp"]["polish"], false);
  EXPECT_EQ(j["experiment"]["n_s_values"], json({5, 7}));
  EXPECT_TRUE(j["controller"]["input_upper"][1].is_null());
}

TEST(Override, FallsBackToString) {
  json j = json::object();
  apply_override(j, "experiment.name=night run");
  apply_override(j, "experiment.plant=lti");
  EXPECT_EQ(j["experiment"]["name"], "night run");
  EXPECT_EQ(config_from_json(j).plant, PlantKind::lti);
}

TEST(Override, ReplacesExistingValue) {
  json j = config_to_json(ExperimentConfig::defaults(PlantKind::vehicle));
  apply_override(j, "controller.lambda_sigma=250.5");
  EXPECT_EQ(config_from_json(j).controller.lambda_sigma, 250.5);
}

TEST(Override, RejectsMalformedAssignments) {
  json j = json::object();
  EXPECT_THROW(apply_override(j, "noise.sigma_v"), Error);
  EXPECT_THROW(apply_override(j, "=3"), Error);
  EXPECT_THROW(apply_override(j, "noise..sigma_v=3"), Error);
  apply_override(j, "noise.sigma_v=1");
  EXPECT_THROW(apply_override(j, "noise.sigma_v.x=3"), Error);
}

TEST(ParseJson, ReportsLineAndColumn) {
  const std::string msg = error_of([] { static_cast<void>(parse_json("{\n  \"a\": 1,\n  \"b\": ]\n}", "cfg.json")); });
  EXPECT_NE(msg.find("cfg.json:3:"), std::string::npos) << msg;
}

class ConfigFile : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("deepc_config_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::filesystem::path dir_;
};

TEST_F(ConfigFile, MissingFileNamesThePath) {
  const std::string msg = error_of([&] { static_cast<void>(load_config(dir_ / "absent.json")); });
  EXPECT_NE(msg.find("absent.json"), std::string::npos);
}

TEST_F(ConfigFile, OverridesApplyBeforeValidation) {
  io::write_file_atomically(dir_ / "c.json", R"({"experiment": {"plant": "lti"}})");
  const ExperimentConfig config = load_config(dir_ / "c.json", {"noise.sigma_output=0.25", "experiment.seeds=[3]"});
  EXPECT_EQ(config.noise.sigma_output, 0.25);
  EXPECT_EQ(config.seeds, std::vector<std::uint64_t>{3});
  EXPECT_THROW(static_cast<void>(load_config(dir_ / "c.json", {"controller.horizon=0"})), Error);
}

// ---------------------------------------------------------------------------
// Report

TEST(CellKey, InvertsRunRecordKey) {
  for (const Strategy s : {Strategy::contextual, Strategy::random, Strategy::full}) {
    for (const Index n_s : {1, 30, 2975}) {
      for (const std::uint64_t seed : {0ULL, 9ULL, 123456ULL}) {
        RunRecord r;
        r.strategy = s;
        r.n_s = n_s;
        r.seed = seed;
        const CellKey key = parse_cell_key(r.cell_key());
        EXPECT_EQ(key.strategy, s);
        EXPECT_EQ(key.n_s, n_s);
        EXPECT_EQ(key.seed, seed);
      }
    }
  }
}

TEST(CellKey, RejectsMalformedKeys) {
  for (const char* key : {"", "contextual", "contextual_ns_seed1", "greedy_ns3_seed1", "random_ns3_seedx",
                          "random_seed1_ns3", "random_ns-3_seed1"}) {
    EXPECT_THROW(static_cast<void>(parse_cell_key(key)), Error) << key;
  }
}

class ReportDir : public ConfigFile {
 protected:
  void write_sweep(const std::vector<RunRecord>& records) {
    ExperimentConfig config = ExperimentConfig::defaults(PlantKind::lti);
    config.name = "demo";
    io::write_file_atomically(dir_ / "manifest.json", json({{"config", config_to_json(config)}}).dump());
    std::filesystem::create_directories(dir_ / "runs" / "demo");
    for (const RunRecord& r : records) write_run_csv(r, dir_ / "runs" / "demo" / (r.cell_key() + ".csv"));
    write_summary_csv(aggregate(records), dir_ / "summary.csv");
  }

  static RunRecord record(Strategy strategy, Index n_s, std::uint64_t seed, const std::vector<double>& errors) {
    RunRecord r;
    r.plant = PlantKind::lti;
    r.strategy = strategy;
    r.n_s = n_s;
    r.seed = seed;
    for (std::size_t i = 0; i < errors.size(); ++i) {
      StepLog s;
      s.step = static_cast<Index>(i);
      s.y = Vector::Zero(1);
      s.r = Vector::Zero(1);
      s.u = Vector::Zero(1);
      s.e_t = errors[i];
      s.solve_ms = i == 0 ? 0.0 : 1.0 + 0.123456 * static_cast<double>(i);
      s.status = i == 0 ? "warmup" : "solved";
      r.steps.push_back(s);
    }
    return r;
  }
};

TEST_F(ReportDir, EmptyDirectoryIsAnError) {
  EXPECT_THROW(static_cast<void>(write_report(dir_, dir_)), Error);
  EXPECT_THROW(static_cast<void>(write_report(dir_ / "absent", dir_)), Error);
}

TEST_F(ReportDir, MissingRunFilesAreAnError) {
  write_sweep({record(Strategy::random, 5, 0, {9.0, 1.0})});
  std::filesystem::remove_all(dir_ / "runs");
  try {
    static_cast<void>(write_report(dir_, dir_));
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("no run files"), std::string::npos);
  }
}

TEST_F(ReportDir, SingleCellGivesOneLabeledGroup) {
  write_sweep({record(Strategy::contextual, 7, 2, {9.0, 0.5, 0.25, 0.125})});
  const ReportFiles files = write_report(dir_, dir_ / "out");
  const io::CsvTable box = io::read_csv(files.boxplot);
  EXPECT_EQ(box.header, (std::vector<std::string>{"plant", "strategy", "n_s", "seed", "step", "e_t"}));
  ASSERT_EQ(box.rows.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(box.rows[i][0], "lti");
    EXPECT_EQ(box.rows[i][1], "contextual");
    EXPECT_EQ(box.rows[i][2], "7");
    EXPECT_EQ(box.rows[i][3], "2");
    EXPECT_EQ(box.rows[i][4], std::to_string(i + 1));
  }
  EXPECT_EQ(std::stod(box.rows[2][5]), 0.125);
}

TEST_F(ReportDir, BoxplotRegroupsToTheRunErrors) {
  const std::vector<RunRecord> records{record(Strategy::random, 5, 0, {9.0, 1.0, 2.0}),
                                       record(Strategy::random, 5, 1, {9.0, 3.0, 4.0}),
                                       record(Strategy::contextual, 5, 0, {9.0, 0.1, 0.2}),
                                       record(Strategy::full, 40, 0, {9.0, 0.05, 0.07})};
  write_sweep(records);
  const ReportFiles files = write_report(dir_, dir_);
  std::map<std::string, std::vector<double>> groups;
  const io::CsvTable box = io::read_csv(files.boxplot);
  for (const auto& row : box.rows) groups[row[1] + "/" + row[2]].push_back(std::stod(row[5]));
  EXPECT_EQ(groups["random/5"], (std::vector<double>{1.0, 2.0, 3.0, 4.0}));
  EXPECT_EQ(groups["contextual/5"], (std::vector<double>{0.1, 0.2}));
  EXPECT_EQ(groups["full/40"], (std::vector<double>{0.05, 0.07}));
  EXPECT_EQ(files.boxplot_rows, 8u);
}

TEST_F(ReportDir, TimingTableHasTwoDecimals) {
  write_sweep({record(Strategy::random, 5, 0, {9.0, 1.0, 2.0, 3.0})});
  const ReportFiles files = write_report(dir_, dir_);
  const io::CsvTable t = io::read_csv(files.timing);
  EXPECT_EQ(t.header, (std::vector<std::string>{"plant", "strategy", "n_s", "p99_ms", "max_ms"}));
  ASSERT_EQ(t.rows.size(), 1u);
  // solve times 1.123456, 1.246912, 1.370368: nearest-rank p99 and max are the last
  EXPECT_EQ(t.rows[0][3], "1.37");
  EXPECT_EQ(t.rows[0][4], "1.37");
}

}  // namespace
}  // namespace deepc
