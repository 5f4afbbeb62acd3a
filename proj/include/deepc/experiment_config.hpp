#pragma once

#include "deepc/experiment_harness.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace deepc {

/// Resolved configuration as JSON with sections experiment, controller, noise,
/// data and reference. Infinite bounds are written as null.
[[nodiscard]] nlohmann::json config_to_json(const ExperimentConfig& config);

/// Starts from the defaults of `experiment.plant` and applies every present
/// key. Unknown keys and mistyped values raise ErrorKind::config naming the
/// dotted key. A manifest (object with a `config` member) is accepted too.
[[nodiscard]] ExperimentConfig config_from_json(const nlohmann::json& json);

/// Applies `a.b.c=value`; the value is parsed as JSON, falling back to a
/// plain string.
void apply_override(nlohmann::json& json, std::string_view assignment);

/// Reads, overrides and validates a config file.
[[nodiscard]] ExperimentConfig load_config(const std::filesystem::path& path,
                                           const std::vector<std::string>& overrides = {});

/// Parses JSON text; syntax errors report line and column.
[[nodiscard]] nlohmann::json parse_json(const std::string& text, const std::string& source);

}  // namespace deepc
