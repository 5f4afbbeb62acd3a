#pragma once

#include "deepc/experiment_harness.hpp"

#include <cstddef>
#include <filesystem>
#include <string_view>

namespace deepc {

struct CellKey {
  Strategy strategy = Strategy::contextual;
  Index n_s = 0;
  std::uint64_t seed = 0;
};

/// Inverse of RunRecord::cell_key.
[[nodiscard]] CellKey parse_cell_key(std::string_view key);

struct ReportFiles {
  std::filesystem::path boxplot;
  std::filesystem::path timing;
  std::size_t boxplot_rows = 0;
  std::size_t timing_rows = 0;
};

/// Reads a sweep directory (manifest.json, summary.csv, runs/<experiment>/*.csv)
/// and writes boxplot_data.csv with the per-step e_t of controller steps and
/// timing_table.csv with p99 and max solve times to two decimals.
ReportFiles write_report(const std::filesystem::path& sweep_dir, const std::filesystem::path& out_dir);

}  // namespace deepc
