#pragma once

#include "deepc/trajectory_data.hpp"

#include <filesystem>

namespace deepc {

/// Writes one CSV per trajectory (`<name>_<i>.csv`, header
/// `t,u_0..u_{m-1},y_0..y_{p-1}`) plus the `<name>.json` manifest holding the
/// file list, dimensions, sample period and normalization statistics.
/// Returns the manifest path.
std::filesystem::path save_dataset(const Dataset& dataset, const std::filesystem::path& directory,
                                   const std::string& name);

/// Loads a dataset from its manifest; statistics are taken from the manifest.
[[nodiscard]] Dataset load_dataset(const std::filesystem::path& manifest_path);

}  // namespace deepc
