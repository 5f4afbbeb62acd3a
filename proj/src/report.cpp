#include "deepc/report.hpp"

#include "deepc/error.hpp"
#include "deepc/experiment_config.hpp"
#include "deepc/io_util.hpp"

#include <spdlog/fmt/fmt.h>

#include <algorithm>
#include <charconv>
#include <sstream>
#include <string>
#include <vector>

namespace deepc {

namespace {

namespace fs = std::filesystem;

Index parse_integer(std::string_view text, std::string_view key) {
  Index value = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || end != text.data() + text.size() || value < 0) {
    throw Error(ErrorKind::invalid_argument, "malformed cell key '" + std::string(key) + "'");
  }
  return value;
}

struct RunFile {
  CellKey key;
  fs::path path;
};

}  // namespace

CellKey parse_cell_key(std::string_view key) {
  const auto ns = key.rfind("_ns");
  const auto seed = key.rfind("_seed");
  if (ns == std::string_view::npos || seed == std::string_view::npos || seed < ns) {
    throw Error(ErrorKind::invalid_argument, "malformed cell key '" + std::string(key) + "'");
  }
  CellKey out;
  try {
    out.strategy = strategy_from_string(key.substr(0, ns));
  } catch (const Error&) {
    throw Error(ErrorKind::invalid_argument, "malformed cell key '" + std::string(key) + "'");
  }
  out.n_s = parse_integer(key.substr(ns + 3, seed - ns - 3), key);
  out.seed = static_cast<std::uint64_t>(parse_integer(key.substr(seed + 5), key));
  return out;
}

ReportFiles write_report(const fs::path& sweep_dir, const fs::path& out_dir) {
  if (!fs::is_directory(sweep_dir)) throw Error(ErrorKind::io, "runs directory not found: " + sweep_dir.string());
  const fs::path manifest = sweep_dir / "manifest.json";
  const fs::path summary_path = sweep_dir / "summary.csv";
  if (!fs::exists(manifest) || !fs::exists(summary_path)) {
    throw Error(ErrorKind::io, "no sweep results in " + sweep_dir.string() + " (manifest.json and summary.csv required)");
  }
  const ExperimentConfig config = config_from_json(parse_json(io::read_file(manifest), manifest.string()));
  const std::string plant(to_string(config.plant));
  const fs::path runs_dir = sweep_dir / "runs" / config.name;

  std::vector<RunFile> files;
  if (fs::is_directory(runs_dir)) {
    for (const auto& entry : fs::directory_iterator(runs_dir)) {
      if (entry.path().extension() != ".csv") continue;
      files.push_back({parse_cell_key(entry.path().stem().string()), entry.path()});
    }
  }
  if (files.empty()) throw Error(ErrorKind::io, "no run files in " + runs_dir.string());
  std::sort(files.begin(), files.end(), [](const RunFile& a, const RunFile& b) {
    if (a.key.strategy != b.key.strategy) return a.key.strategy < b.key.strategy;
    if (a.key.n_s != b.key.n_s) return a.key.n_s < b.key.n_s;
    return a.key.seed < b.key.seed;
  });

  ReportFiles result;
  std::ostringstream box;
  box << "plant,strategy,n_s,seed,step,e_t\n";
  for (const RunFile& file : files) {
    const io::CsvTable table = io::read_csv(file.path);
    const std::size_t c_step = table.column("step");
    const std::size_t c_err = table.column("e_t");
    const std::size_t c_status = table.column("status");
    for (const auto& row : table.rows) {
      if (row.at(c_status) == "warmup") continue;
      box << plant << ',' << to_string(file.key.strategy) << ',' << file.key.n_s << ',' << file.key.seed << ','
          << row.at(c_step) << ',' << row.at(c_err) << '\n';
      ++result.boxplot_rows;
    }
  }

  const std::vector<CellSummary> summary = read_summary_csv(summary_path);
  if (summary.empty()) throw Error(ErrorKind::io, summary_path.string() + " has no rows");
  std::ostringstream timing;
  timing << "plant,strategy,n_s,p99_ms,max_ms\n";
  for (const CellSummary& s : summary) {
    timing << to_string(s.plant) << ',' << to_string(s.strategy) << ',' << s.n_s << ','
           << fmt::format("{:.2f},{:.2f}", s.p99_ms, s.max_ms) << '\n';
    ++result.timing_rows;
  }

  fs::create_directories(out_dir);
  result.boxplot = out_dir / "boxplot_data.csv";
  result.timing = out_dir / "timing_table.csv";
  io::write_file_atomically(result.boxplot, box.str());
  io::write_file_atomically(result.timing, timing.str());
  return result;
}

}  // namespace deepc
