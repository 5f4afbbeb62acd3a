#include "deepc/cli.hpp"

#include "deepc/dataset_io.hpp"
#include "deepc/error.hpp"
#include "deepc/experiment_config.hpp"
#include "deepc/experiment_harness.hpp"
#include "deepc/io_util.hpp"
#include "deepc/report.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <optional>
#include <ostream>
#include <thread>

namespace deepc {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Options {
  std::string config_path;
  std::string out_dir;
  unsigned jobs = std::max(1U, std::thread::hardware_concurrency());
  bool force = false;
  std::optional<std::size_t> seeds;
  std::vector<std::string> overrides;
  std::string strategy = "contextual";
  std::optional<Index> n_s;
  std::uint64_t seed = 0;
  std::string runs_dir;
  std::vector<double> lambda_g_grid{1e-3, 1e-1, 1e1, 1e3};
  std::vector<double> lambda_sigma_grid{1e-3, 1e-1, 1e1, 1e3};
};

/// Configuration and usage problems, reported with exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

ExperimentConfig resolve_config(const Options& options) {
  if (options.config_path.empty()) throw UsageError("--config is required");
  try {
    ExperimentConfig config = load_config(options.config_path, options.overrides);
    if (options.seeds) {
      if (*options.seeds == 0) throw UsageError("--seeds must be positive");
      config.seeds.resize(*options.seeds);
      for (std::size_t i = 0; i < *options.seeds; ++i) config.seeds[i] = i;
    }
    config.validate();
    return config;
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

/// Refuses to write into a directory holding earlier results unless forced.
/// A configured input dataset is never among the removed paths.
void prepare_output(const fs::path& out, std::vector<fs::path> produced, bool force, const ExperimentConfig& config) {
  if (!config.dataset_path.empty()) {
    std::erase(produced, fs::path("dataset"));
  }
  for (const fs::path& p : produced) {
    if (fs::exists(out / p)) {
      if (!force) {
        throw UsageError("output " + (out / p).string() + " already exists; pass --force to overwrite");
      }
      fs::remove_all(out / p);
    }
  }
  fs::create_directories(out);
}

struct PreparedData {
  PreprocessedData data;
  bool persistently_exciting = false;
  Index excitation_order = 0;
  double sigma_min = 0.0;
  std::string dataset_manifest;
};

PreparedData prepare_data(const ExperimentConfig& config, const fs::path& out, std::ostream& log) {
  PreparedData prepared;
  prepared.excitation_order = config.controller.past_length + config.controller.horizon + 4;
  std::optional<Dataset> loaded;
  if (config.dataset_path.empty()) {
    CollectedData collected = collect_excitation_data(config);
    prepared.persistently_exciting = collected.persistently_exciting;
    prepared.dataset_manifest = save_dataset(collected.dataset, out / "dataset", config.name).string();
    loaded = std::move(collected.dataset);
  } else {
    loaded = load_dataset(config.dataset_path);
    std::vector<Matrix> inputs;
    for (const auto& t : loaded->trajectories()) inputs.push_back(t.inputs());
    prepared.persistently_exciting = is_collectively_persistently_exciting(inputs, prepared.excitation_order);
    prepared.dataset_manifest = config.dataset_path;
  }
  const Dataset& dataset = *loaded;
  if (dataset.input_dim() != config.input_dim() || dataset.output_dim() != config.output_dim()) {
    throw Error(ErrorKind::dimension_mismatch, "dataset dimensions do not match plant " +
                                                   std::string(to_string(config.plant)));
  }
  prepared.data = preprocess_dataset(dataset, config.alignment(), config.controller.past_length,
                                     config.controller.horizon, config.controller.incremental_inputs);
  prepared.sigma_min = min_singular_value(prepared.data.matrices);
  log << "persistently exciting of order " << prepared.excitation_order << ": "
      << (prepared.persistently_exciting ? "yes" : "no") << '\n'
      << "dataset sigma_min: " << io::format_double(prepared.sigma_min) << '\n'
      << "data columns: " << prepared.data.matrices.columns() << '\n';
  return prepared;
}

json dataset_json(const PreparedData& prepared) {
  return {{"manifest", prepared.dataset_manifest},
          {"persistently_exciting", prepared.persistently_exciting},
          {"excitation_order", prepared.excitation_order},
          {"sigma_min", prepared.sigma_min},
          {"columns", prepared.data.matrices.columns()}};
}

void write_manifest(const fs::path& out, const std::string& command, const ExperimentConfig& config, json extra) {
  json manifest = {{"command", command}, {"config", config_to_json(config)}};
  for (auto& [key, value] : extra.items()) manifest[key] = value;
  io::write_file_atomically(out / "manifest.json", manifest.dump(2) + "\n");
}

int write_records(const fs::path& out, const ExperimentConfig& config, const std::vector<RunRecord>& records,
                  std::ostream& log) {
  const fs::path runs = out / "runs" / config.name;
  fs::create_directories(runs);
  bool all_completed = true;
  for (const RunRecord& r : records) {
    write_run_csv(r, runs / (r.cell_key() + ".csv"));
    if (r.status != RunStatus::completed) {
      all_completed = false;
      log << r.cell_key() << ": " << to_string(r.status) << '\n';
    }
  }
  const std::vector<CellSummary> summary = aggregate(records);
  write_summary_csv(summary, out / "summary.csv");
  for (const CellSummary& s : summary) {
    log << to_string(s.strategy) << " n_s=" << s.n_s << " median_err=" << io::format_double(s.median_err)
        << " p99_ms=" << io::format_double(s.p99_ms) << " failures=" << s.failures << '\n';
  }
  return all_completed ? kExitSuccess : kExitExperimentFailure;
}

int cmd_collect(const Options& options, std::ostream& out) {
  const ExperimentConfig config = resolve_config(options);
  const fs::path dir = options.out_dir.empty() ? fs::path("data") : fs::path(options.out_dir);
  if (!config.dataset_path.empty()) throw UsageError("collect writes a new dataset; unset experiment.dataset");
  prepare_output(dir, {"dataset", "manifest.json"}, options.force, config);
  const PreparedData prepared = prepare_data(config, dir, out);
  write_manifest(dir, "collect", config, {{"dataset", dataset_json(prepared)}});
  out << "dataset: " << prepared.dataset_manifest << '\n';
  return kExitSuccess;
}

int cmd_run(const Options& options, std::ostream& out) {
  const ExperimentConfig config = resolve_config(options);
  const fs::path dir = options.out_dir.empty() ? fs::path("runs_" + config.name) : fs::path(options.out_dir);
  Strategy strategy{};
  try {
    strategy = strategy_from_string(options.strategy);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  prepare_output(dir, {"runs", "summary.csv", "manifest.json", "dataset"}, options.force, config);
  const PreparedData prepared = prepare_data(config, dir, out);
  const Index columns = prepared.data.matrices.columns();
  Index n_s = options.n_s.value_or(config.n_s_values.empty() ? columns : config.n_s_values.front());
  if (strategy == Strategy::full) n_s = columns;
  if (n_s < 1) throw UsageError("--n-s must be positive");
  const Matrix reference = experiment_reference(config);
  const RunRecord record = run_closed_loop(config, prepared.data, reference, strategy, n_s, options.seed);
  write_manifest(dir, "run", config,
                 {{"dataset", dataset_json(prepared)},
                  {"cells", json::array({{{"strategy", options.strategy}, {"n_s", n_s}, {"seed", options.seed}}})}});
  out << record.cell_key() << ": " << to_string(record.status) << '\n';
  return write_records(dir, config, {record}, out);
}

int cmd_sweep(const Options& options, std::ostream& out) {
  const ExperimentConfig config = resolve_config(options);
  const fs::path dir = options.out_dir.empty() ? fs::path("runs_" + config.name) : fs::path(options.out_dir);
  prepare_output(dir, {"runs", "summary.csv", "manifest.json", "dataset"}, options.force, config);
  const PreparedData prepared = prepare_data(config, dir, out);
  const std::vector<RunCell> cells = enumerate_cells(config, prepared.data.matrices.columns());
  json cell_list = json::array();
  for (const RunCell& c : cells) {
    cell_list.push_back({{"strategy", std::string(to_string(c.strategy))}, {"n_s", c.n_s}, {"seed", c.seed}});
  }
  write_manifest(dir, "sweep", config, {{"dataset", dataset_json(prepared)}, {"cells", cell_list}});
  out << "running " << cells.size() << " cells on " << options.jobs << " threads\n";
  const std::vector<RunRecord> records = run_cells(config, prepared.data, cells, options.jobs);
  return write_records(dir, config, records, out);
}

int cmd_report(const Options& options, std::ostream& out) {
  if (options.runs_dir.empty()) throw UsageError("report needs a runs directory");
  const fs::path dir = options.out_dir.empty() ? fs::path(options.runs_dir) : fs::path(options.out_dir);
  const ReportFiles files = write_report(options.runs_dir, dir);
  out << files.boxplot.string() << ": " << files.boxplot_rows << " rows\n"
      << files.timing.string() << ": " << files.timing_rows << " rows\n";
  return kExitSuccess;
}

int cmd_gridsearch(const Options& options, std::ostream& out) {
  ExperimentConfig config = resolve_config(options);
  const fs::path dir = options.out_dir.empty() ? fs::path("gridsearch_" + config.name) : fs::path(options.out_dir);
  Strategy strategy{};
  try {
    strategy = strategy_from_string(options.strategy);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  if (options.lambda_g_grid.empty() || options.lambda_sigma_grid.empty()) throw UsageError("empty grid");
  prepare_output(dir, {"gridsearch.csv", "manifest.json", "dataset"}, options.force, config);
  const PreparedData prepared = prepare_data(config, dir, out);
  const Index columns = prepared.data.matrices.columns();
  const Index n_s = strategy == Strategy::full
                        ? columns
                        : options.n_s.value_or(config.n_s_values.empty() ? columns : config.n_s_values.front());
  std::vector<RunCell> cells;
  for (const std::uint64_t seed : config.seeds) cells.push_back({strategy, n_s, seed});
  write_manifest(dir, "gridsearch", config,
                 {{"dataset", dataset_json(prepared)},
                  {"strategy", options.strategy},
                  {"n_s", n_s},
                  {"lambda_g_bar", options.lambda_g_grid},
                  {"lambda_sigma", options.lambda_sigma_grid}});

  std::string csv = "lambda_g_bar,lambda_sigma,median_err,failures\n";
  double best = std::numeric_limits<double>::infinity();
  std::pair<double, double> best_pair{0.0, 0.0};
  for (const double lg : options.lambda_g_grid) {
    for (const double ls : options.lambda_sigma_grid) {
      ExperimentConfig trial = config;
      trial.controller.lambda_g_bar = lg;
      trial.controller.lambda_sigma = ls;
      const std::vector<CellSummary> summary = aggregate(run_cells(trial, prepared.data, cells, options.jobs));
      const CellSummary& s = summary.front();
      csv += io::format_double(lg) + ',' + io::format_double(ls) + ',' + io::format_double(s.median_err) + ',' +
             std::to_string(s.failures) + '\n';
      out << "lambda_g_bar=" << io::format_double(lg) << " lambda_sigma=" << io::format_double(ls)
          << " median_err=" << io::format_double(s.median_err) << " failures=" << s.failures << '\n';
      if (s.failures == 0 && s.median_err < best) {
        best = s.median_err;
        best_pair = {lg, ls};
      }
    }
  }
  io::write_file_atomically(dir / "gridsearch.csv", csv);
  if (!std::isfinite(best)) {
    out << "no grid point completed every seed\n";
    return kExitExperimentFailure;
  }
  out << "best: lambda_g_bar=" << io::format_double(best_pair.first)
      << " lambda_sigma=" << io::format_double(best_pair.second) << " median_err=" << io::format_double(best) << '\n';
  return kExitSuccess;
}

void add_config_options(CLI::App& app, Options& options) {
  app.add_option("--config", options.config_path, "Experiment config (JSON) or a manifest.json")->required();
  app.add_option("--set", options.overrides, "Override a config value, dotted key=value")->take_all();
  app.add_option("--seeds", options.seeds, "Use seeds 0..N-1");
  app.add_flag("--force", options.force, "Overwrite earlier results in the output directory");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options options;
  CLI::App app{"Data-driven predictive control with contextual sampling", "deepc"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  CLI::App* collect = app.add_subcommand("collect", "Record excitation data and check persistency of excitation");
  CLI::App* run = app.add_subcommand("run", "Run one closed-loop cell");
  CLI::App* sweep = app.add_subcommand("sweep", "Run every (strategy, n_s, seed) cell");
  CLI::App* report = app.add_subcommand("report", "Write boxplot_data.csv and timing_table.csv from a sweep");
  CLI::App* grid = app.add_subcommand("gridsearch", "Grid search over lambda_g_bar and lambda_sigma");

  for (CLI::App* sub : {collect, run, sweep, grid}) {
    add_config_options(*sub, options);
    sub->add_option("--out", options.out_dir, "Output directory");
  }
  for (CLI::App* sub : {collect, run, sweep, grid}) {
    sub->add_option("--jobs", options.jobs, "Maximum concurrent runs")->check(CLI::PositiveNumber);
  }
  for (CLI::App* sub : {run, grid}) {
    sub->add_option("--strategy", options.strategy, "contextual, random or full");
    sub->add_option("--n-s", options.n_s, "Number of sampled columns")->check(CLI::PositiveNumber);
  }
  run->add_option("--seed", options.seed, "Run seed");
  grid->add_option("--lambda-g", options.lambda_g_grid, "lambda_g_bar grid values")->check(CLI::PositiveNumber);
  grid->add_option("--lambda-sigma", options.lambda_sigma_grid, "lambda_sigma grid values")
      ->check(CLI::PositiveNumber);
  report->add_option("runs_dir", options.runs_dir, "Sweep output directory")->required();
  report->add_option("--out", options.out_dir, "Directory for the report CSVs (default: runs_dir)");

  std::vector<const char*> argv{"deepc"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitSuccess : kExitUsage;
  }

  try {
    if (collect->parsed()) return cmd_collect(options, out);
    if (run->parsed()) return cmd_run(options, out);
    if (sweep->parsed()) return cmd_sweep(options, out);
    if (report->parsed()) return cmd_report(options, out);
    return cmd_gridsearch(options, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitExperimentFailure;
  }
}

}  // namespace deepc
