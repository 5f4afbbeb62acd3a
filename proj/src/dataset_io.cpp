#include "deepc/dataset_io.hpp"

#include "deepc/error.hpp"
#include "deepc/io_util.hpp"

#include <json.hpp>

#include <string>

namespace deepc {

namespace {

using nlohmann::json;

json to_json(const Vector& v) {
  json arr = json::array();
  for (Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

Vector vector_from_json(const json& arr, Index expected, const std::string& what) {
  if (!arr.is_array() || static_cast<Index>(arr.size()) != expected) {
    throw Error(ErrorKind::io, "manifest field '" + what + "' must be an array of " + std::to_string(expected));
  }
  Vector v(expected);
  for (Index i = 0; i < expected; ++i) v(i) = arr.at(static_cast<std::size_t>(i)).get<double>();
  return v;
}

std::vector<bool> flags_from_std(const Vector& std_dev, const json& flags) {
  std::vector<bool> out(static_cast<std::size_t>(std_dev.size()), false);
  if (flags.is_array() && flags.size() == out.size()) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = flags[i].get<bool>();
  }
  return out;
}

}  // namespace

std::filesystem::path save_dataset(const Dataset& dataset, const std::filesystem::path& directory,
                                   const std::string& name) {
  const Index m = dataset.input_dim();
  const Index p = dataset.output_dim();
  json files = json::array();
  const auto& trajectories = dataset.trajectories();
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const auto& traj = trajectories[i];
    std::string csv = "t";
    for (Index j = 0; j < m; ++j) csv += ",u_" + std::to_string(j);
    for (Index j = 0; j < p; ++j) csv += ",y_" + std::to_string(j);
    csv += '\n';
    for (Index k = 0; k < traj.length(); ++k) {
      csv += io::format_double(static_cast<double>(k) * traj.sample_period());
      for (Index j = 0; j < m; ++j) csv += ',' + io::format_double(traj.inputs()(k, j));
      for (Index j = 0; j < p; ++j) csv += ',' + io::format_double(traj.outputs()(k, j));
      csv += '\n';
    }
    const std::string file = name + "_" + std::to_string(i) + ".csv";
    io::write_file_atomically(directory / file, csv);
    files.push_back(file);
  }

  const auto& s = dataset.stats();
  json manifest = {
      {"files", files},
      {"m", m},
      {"p", p},
      {"sample_period", dataset.sample_period()},
      {"aligned", dataset.aligned()},
      {"stats",
       {{"input_mean", to_json(s.input_mean)},
        {"input_std", to_json(s.input_std)},
        {"output_mean", to_json(s.output_mean)},
        {"output_std", to_json(s.output_std)},
        {"degenerate_inputs", s.degenerate_inputs},
        {"degenerate_outputs", s.degenerate_outputs}}},
  };
  const auto path = directory / (name + ".json");
  io::write_file_atomically(path, manifest.dump(2) + "\n");
  return path;
}

Dataset load_dataset(const std::filesystem::path& manifest_path) {
  json manifest;
  try {
    manifest = json::parse(io::read_file(manifest_path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::io, manifest_path.string() + ": " + e.what());
  }
  try {
    const Index m = manifest.at("m").get<Index>();
    const Index p = manifest.at("p").get<Index>();
    const double ts = manifest.at("sample_period").get<double>();
    const auto dir = manifest_path.parent_path();

    std::vector<Trajectory> trajectories;
    for (const auto& f : manifest.at("files")) {
      const auto path = dir / f.get<std::string>();
      const auto table = io::read_csv(path);
      if (static_cast<Index>(table.header.size()) != 1 + m + p) {
        throw Error(ErrorKind::io, path.string() + ": header does not match m=" + std::to_string(m) +
                                       ", p=" + std::to_string(p));
      }
      const auto rows = static_cast<Index>(table.rows.size());
      Matrix inputs(rows, m);
      Matrix outputs(rows, p);
      for (Index k = 0; k < rows; ++k) {
        const auto& row = table.rows[static_cast<std::size_t>(k)];
        for (Index j = 0; j < m; ++j) inputs(k, j) = std::stod(row[static_cast<std::size_t>(1 + j)]);
        for (Index j = 0; j < p; ++j) outputs(k, j) = std::stod(row[static_cast<std::size_t>(1 + m + j)]);
      }
      trajectories.emplace_back(std::move(inputs), std::move(outputs), ts);
    }

    const auto& js = manifest.at("stats");
    NormalizationStats stats;
    stats.input_mean = vector_from_json(js.at("input_mean"), m, "input_mean");
    stats.input_std = vector_from_json(js.at("input_std"), m, "input_std");
    stats.output_mean = vector_from_json(js.at("output_mean"), p, "output_mean");
    stats.output_std = vector_from_json(js.at("output_std"), p, "output_std");
    stats.degenerate_inputs = flags_from_std(stats.input_std, js.value("degenerate_inputs", json()));
    stats.degenerate_outputs = flags_from_std(stats.output_std, js.value("degenerate_outputs", json()));
    return Dataset(std::move(trajectories), std::move(stats), manifest.value("aligned", false));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::io, manifest_path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw Error(ErrorKind::io, manifest_path.string() + ": non-numeric CSV field");
  }
}

}  // namespace deepc
