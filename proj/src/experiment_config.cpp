#include "deepc/experiment_config.hpp"

#include "deepc/error.hpp"
#include "deepc/io_util.hpp"

#include <cmath>
#include <limits>
#include <set>

namespace deepc {

namespace {

using nlohmann::json;

json vector_json(const Vector& v) {
  json arr = json::array();
  for (Index i = 0; i < v.size(); ++i) {
    if (std::isfinite(v(i))) {
      arr.push_back(v(i));
    } else {
      arr.push_back(nullptr);
    }
  }
  return arr;
}

[[noreturn]] void fail(const std::string& key, const std::string& what) {
  throw Error(ErrorKind::config, "config key '" + key + "': " + what);
}

/// Reads the members of one JSON object and rejects the ones never read.
class Section {
 public:
  Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) fail(path_, "expected an object");
  }

  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, value] : node_.items()) {
      if (!seen_.contains(key)) fail(key_of(key), "unknown key");
    }
  }

  Section(const Section&) = delete;
  Section& operator=(const Section&) = delete;

  [[nodiscard]] const json* find(const std::string& key) {
    seen_.insert(key);
    const auto it = node_.find(key);
    return it == node_.end() ? nullptr : &*it;
  }

  [[nodiscard]] std::string key_of(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void read(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) fail(key_of(key), "expected a number");
      out = v->get<double>();
    }
  }

  void read(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) fail(key_of(key), "expected true or false");
      out = v->get<bool>();
    }
  }

  void read(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) fail(key_of(key), "expected a string");
      out = v->get<std::string>();
    }
  }

  void read(const std::string& key, int& out) {
    Index value = out;
    read(key, value);
    out = static_cast<int>(value);
  }

  void read(const std::string& key, Index& out) {
    if (const json* v = find(key)) out = integer(*v, key_of(key));
  }

  void read(const std::string& key, std::uint64_t& out) {
    if (const json* v = find(key)) {
      const Index value = integer(*v, key_of(key));
      if (value < 0) fail(key_of(key), "expected a nonnegative integer");
      out = static_cast<std::uint64_t>(value);
    }
  }

  /// Arrays of numbers; null entries read as `null_value`.
  void read(const std::string& key, Vector& out, double null_value = std::numeric_limits<double>::quiet_NaN()) {
    const json* v = find(key);
    if (v == nullptr) return;
    if (!v->is_array()) fail(key_of(key), "expected an array of numbers");
    Vector result(static_cast<Index>(v->size()));
    for (std::size_t i = 0; i < v->size(); ++i) {
      const json& item = (*v)[i];
      if (item.is_null() && !std::isnan(null_value)) {
        result(static_cast<Index>(i)) = null_value;
      } else if (item.is_number()) {
        result(static_cast<Index>(i)) = item.get<double>();
      } else {
        fail(key_of(key), "expected an array of numbers");
      }
    }
    out = std::move(result);
  }

 private:
  static Index integer(const json& v, const std::string& key) {
    if (v.is_number_integer()) return v.get<Index>();
    if (v.is_number_float()) {
      const double d = v.get<double>();
      if (std::floor(d) == d && std::abs(d) < 9e15) return static_cast<Index>(d);
    }
    fail(key, "expected an integer");
  }

  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

constexpr double kInf = std::numeric_limits<double>::infinity();

void read_bounds(Section& section, const std::string& prefix, ChannelBounds& bounds) {
  section.read(prefix + "_lower", bounds.lower, -kInf);
  section.read(prefix + "_upper", bounds.upper, kInf);
}

void read_qp(Section& s, QpSettings& qp) {
  s.read("eps_abs", qp.eps_abs);
  s.read("eps_rel", qp.eps_rel);
  s.read("max_iter", qp.max_iter);
  s.read("rho", qp.rho);
  s.read("sigma", qp.sigma);
  s.read("alpha", qp.alpha);
  s.read("adaptive_rho", qp.adaptive_rho);
  s.read("adaptive_rho_interval", qp.adaptive_rho_interval);
  s.read("adaptive_rho_tolerance", qp.adaptive_rho_tolerance);
  s.read("scaling_iterations", qp.scaling_iterations);
  s.read("eps_primal_infeasible", qp.eps_primal_infeasible);
  s.read("check_interval", qp.check_interval);
  s.read("polish", qp.polish);
  s.read("polish_trigger", qp.polish_trigger);
}

void read_controller(Section& s, ControllerConfig& c) {
  s.read("past_length", c.past_length);
  s.read("horizon", c.horizon);
  s.read("sample_count", c.sample_count);
  s.read("output_weights", c.output_weights);
  s.read("input_weights", c.input_weights);
  s.read("input_reference", c.input_reference);
  s.read("lambda_g_bar", c.lambda_g_bar);
  s.read("lambda_sigma", c.lambda_sigma);
  read_bounds(s, "input", c.input_bounds);
  read_bounds(s, "output", c.output_bounds);
  if (const json* v = s.find("softmin_temperature")) {
    if (v->is_null()) {
      c.softmin_temperature.reset();
    } else if (v->is_number()) {
      c.softmin_temperature = v->get<double>();
    } else {
      fail(s.key_of("softmin_temperature"), "expected a number or null");
    }
  }
  s.read("incremental_inputs", c.incremental_inputs);
  if (const json* v = s.find("qp")) {
    Section qp(*v, s.key_of("qp"));
    read_qp(qp, c.qp);
  }
}

void read_noise(Section& s, NoiseConfig& n) {
  s.read("sigma_xy", n.sigma_xy);
  s.read("sigma_v", n.sigma_v);
  s.read("sigma_psi_deg", n.sigma_psi_deg);
  s.read("sigma_wind", n.sigma_wind);
  s.read("sigma_output", n.sigma_output);
  s.read("seed", n.seed);
}

void read_data(Section& s, ExcitationConfig& e) {
  s.read("duration_s", e.duration_s);
  s.read("seed", e.seed);
  s.read("max_attempts", e.max_attempts);
  s.read("accel_range", e.accel_range);
  s.read("steer_range", e.steer_range);
  s.read("min_dwell_s", e.min_dwell_s);
  s.read("max_dwell_s", e.max_dwell_s);
  s.read("speed_low", e.speed_low);
  s.read("speed_high", e.speed_high);
  s.read("box_half_width", e.box_half_width);
  s.read("waypoint_min_dwell_s", e.waypoint_min_dwell_s);
  s.read("waypoint_max_dwell_s", e.waypoint_max_dwell_s);
  s.read("position_gain", e.position_gain);
  s.read("velocity_gain", e.velocity_gain);
  s.read("max_tilt", e.max_tilt);
  s.read("thrust_dither", e.thrust_dither);
  s.read("angle_dither", e.angle_dither);
  s.read("input_std", e.input_std);
  s.read("lti_position_gain", e.lti_position_gain);
  s.read("lti_velocity_gain", e.lti_velocity_gain);
}

void read_reference(Section& s, ExperimentConfig& config) {
  if (const json* v = s.find("track")) {
    Section t(*v, s.key_of("track"));
    t.read("straight_length", config.track.straight_length);
    t.read("radius", config.track.radius);
    t.read("straight_speed", config.track.straight_speed);
    t.read("curve_speed", config.track.curve_speed);
    t.read("acceleration", config.track.acceleration);
  }
  if (const json* v = s.find("figure8")) {
    Section f(*v, s.key_of("figure8"));
    f.read("radius", config.figure8.radius);
    f.read("height", config.figure8.height);
    f.read("z_amplitude", config.figure8.z_amplitude);
    f.read("period", config.figure8.period);
  }
  s.read("setpoint", config.lti_setpoint);
}

void read_experiment(Section& s, ExperimentConfig& config) {
  static_cast<void>(s.find("plant"));
  s.read("name", config.name);
  s.read("sample_period", config.sample_period);
  s.read("duration_s", config.duration_s);
  if (const json* v = s.find("strategies")) {
    if (!v->is_array()) fail(s.key_of("strategies"), "expected an array of strategy names");
    config.strategies.clear();
    for (const auto& item : *v) {
      if (!item.is_string()) fail(s.key_of("strategies"), "expected an array of strategy names");
      try {
        config.strategies.push_back(strategy_from_string(item.get<std::string>()));
      } catch (const Error& e) {
        fail(s.key_of("strategies"), e.what());
      }
    }
  }
  if (const json* v = s.find("n_s_values")) {
    if (!v->is_array()) fail(s.key_of("n_s_values"), "expected an array of integers");
    config.n_s_values.clear();
    for (const auto& item : *v) {
      if (!item.is_number_integer()) fail(s.key_of("n_s_values"), "expected an array of integers");
      config.n_s_values.push_back(item.get<Index>());
    }
  }
  if (const json* v = s.find("seeds")) {
    if (!v->is_array()) fail(s.key_of("seeds"), "expected an array of nonnegative integers");
    config.seeds.clear();
    for (const auto& item : *v) {
      if (!item.is_number_unsigned()) fail(s.key_of("seeds"), "expected an array of nonnegative integers");
      config.seeds.push_back(item.get<std::uint64_t>());
    }
  }
  s.read("dataset", config.dataset_path);
}

PlantKind plant_of(const json& root) {
  const auto experiment = root.find("experiment");
  if (experiment == root.end() || !experiment->is_object()) return PlantKind::vehicle;
  const auto plant = experiment->find("plant");
  if (plant == experiment->end()) return PlantKind::vehicle;
  if (!plant->is_string()) fail("experiment.plant", "expected a string");
  try {
    return plant_from_string(plant->get<std::string>());
  } catch (const Error& e) {
    fail("experiment.plant", e.what());
  }
}

std::pair<std::size_t, std::size_t> line_and_column(const std::string& text, std::size_t byte) {
  std::size_t line = 1;
  std::size_t column = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return {line, column};
}

}  // namespace

json config_to_json(const ExperimentConfig& config) {
  const ControllerConfig& c = config.controller;
  json strategies = json::array();
  for (const Strategy s : config.strategies) strategies.push_back(std::string(to_string(s)));
  json controller = {
      {"past_length", c.past_length},
      {"horizon", c.horizon},
      {"sample_count", c.sample_count},
      {"output_weights", vector_json(c.output_weights)},
      {"input_weights", vector_json(c.input_weights)},
      {"input_reference", vector_json(c.input_reference)},
      {"lambda_g_bar", c.lambda_g_bar},
      {"lambda_sigma", c.lambda_sigma},
      {"input_lower", vector_json(c.input_bounds.lower)},
      {"input_upper", vector_json(c.input_bounds.upper)},
      {"output_lower", vector_json(c.output_bounds.lower)},
      {"output_upper", vector_json(c.output_bounds.upper)},
      {"incremental_inputs", c.incremental_inputs},
      {"qp",
       {{"eps_abs", c.qp.eps_abs},
        {"eps_rel", c.qp.eps_rel},
        {"max_iter", c.qp.max_iter},
        {"rho", c.qp.rho},
        {"sigma", c.qp.sigma},
        {"alpha", c.qp.alpha},
        {"adaptive_rho", c.qp.adaptive_rho},
        {"adaptive_rho_interval", c.qp.adaptive_rho_interval},
        {"adaptive_rho_tolerance", c.qp.adaptive_rho_tolerance},
        {"scaling_iterations", c.qp.scaling_iterations},
        {"eps_primal_infeasible", c.qp.eps_primal_infeasible},
        {"check_interval", c.qp.check_interval},
        {"polish", c.qp.polish},
        {"polish_trigger", c.qp.polish_trigger}}},
  };
  controller["softmin_temperature"] = c.softmin_temperature ? json(*c.softmin_temperature) : json(nullptr);
  const ExcitationConfig& e = config.excitation;
  return {
      {"experiment",
       {{"name", config.name},
        {"plant", std::string(to_string(config.plant))},
        {"sample_period", config.sample_period},
        {"duration_s", config.duration_s},
        {"strategies", strategies},
        {"n_s_values", config.n_s_values},
        {"seeds", config.seeds},
        {"dataset", config.dataset_path}}},
      {"controller", controller},
      {"noise",
       {{"sigma_xy", config.noise.sigma_xy},
        {"sigma_v", config.noise.sigma_v},
        {"sigma_psi_deg", config.noise.sigma_psi_deg},
        {"sigma_wind", config.noise.sigma_wind},
        {"sigma_output", config.noise.sigma_output},
        {"seed", config.noise.seed}}},
      {"data",
       {{"duration_s", e.duration_s},
        {"seed", e.seed},
        {"max_attempts", e.max_attempts},
        {"accel_range", e.accel_range},
        {"steer_range", e.steer_range},
        {"min_dwell_s", e.min_dwell_s},
        {"max_dwell_s", e.max_dwell_s},
        {"speed_low", e.speed_low},
        {"speed_high", e.speed_high},
        {"box_half_width", e.box_half_width},
        {"waypoint_min_dwell_s", e.waypoint_min_dwell_s},
        {"waypoint_max_dwell_s", e.waypoint_max_dwell_s},
        {"position_gain", e.position_gain},
        {"velocity_gain", e.velocity_gain},
        {"max_tilt", e.max_tilt},
        {"thrust_dither", e.thrust_dither},
        {"angle_dither", e.angle_dither},
        {"input_std", e.input_std},
        {"lti_position_gain", e.lti_position_gain},
        {"lti_velocity_gain", e.lti_velocity_gain}}},
      {"reference",
       {{"track",
         {{"straight_length", config.track.straight_length},
          {"radius", config.track.radius},
          {"straight_speed", config.track.straight_speed},
          {"curve_speed", config.track.curve_speed},
          {"acceleration", config.track.acceleration}}},
        {"figure8",
         {{"radius", config.figure8.radius},
          {"height", config.figure8.height},
          {"z_amplitude", config.figure8.z_amplitude},
          {"period", config.figure8.period}}},
        {"setpoint", vector_json(config.lti_setpoint)}}},
  };
}

ExperimentConfig config_from_json(const json& input) {
  if (!input.is_object()) fail("<root>", "expected an object");
  if (input.contains("config") && !input.contains("experiment")) return config_from_json(input.at("config"));
  ExperimentConfig config = ExperimentConfig::defaults(plant_of(input));
  Section root(input, "");
  if (const json* v = root.find("experiment")) {
    Section s(*v, "experiment");
    read_experiment(s, config);
  }
  if (const json* v = root.find("controller")) {
    Section s(*v, "controller");
    read_controller(s, config.controller);
  }
  if (const json* v = root.find("noise")) {
    Section s(*v, "noise");
    read_noise(s, config.noise);
  }
  if (const json* v = root.find("data")) {
    Section s(*v, "data");
    read_data(s, config.excitation);
  }
  if (const json* v = root.find("reference")) {
    Section s(*v, "reference");
    read_reference(s, config);
  }
  return config;
}

void apply_override(json& root, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw Error(ErrorKind::config, "override '" + std::string(assignment) + "' must have the form key=value");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  if (!root.is_object()) root = json::object();
  json* node = &root;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw Error(ErrorKind::config, "override key '" + key + "' has an empty component");
    if (dot == std::string::npos) {
      (*node)[part] = std::move(value);
      return;
    }
    json& child = (*node)[part];
    if (child.is_null()) child = json::object();
    if (!child.is_object()) fail(key.substr(0, dot), "is not a section");
    node = &child;
    start = dot + 1;
  }
}

json parse_json(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, column] = line_and_column(text, e.byte == 0 ? 0 : e.byte - 1);
    throw Error(ErrorKind::config,
                source + ":" + std::to_string(line) + ":" + std::to_string(column) + ": invalid JSON");
  }
}

ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorKind::config, "config file not found: " + path.string());
  }
  json root = parse_json(io::read_file(path), path.string());
  if (root.is_object() && root.contains("config") && !root.contains("experiment")) root = root.at("config");
  for (const auto& assignment : overrides) apply_override(root, assignment);
  ExperimentConfig config = config_from_json(root);
  config.validate();
  return config;
}

}  // namespace deepc
