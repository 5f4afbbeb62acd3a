#include "deepc/experiment_harness.hpp"

#include "deepc/error.hpp"
#include "deepc/io_util.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <thread>

namespace deepc {

namespace {

constexpr double kDivergenceLimit = 1e6;

std::mt19937_64 make_stream(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32), stream};
  return std::mt19937_64(seq);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Vector output_noise_stds(const ExperimentConfig& config) {
  switch (config.plant) {
    case PlantKind::vehicle:
      return config.noise.vehicle_output_stds();
    case PlantKind::quadrotor:
      return Vector::Constant(3, config.noise.sigma_output);
    case PlantKind::lti:
      return Vector::Constant(config.output_dim(), config.noise.sigma_output);
  }
  return {};
}

LtiSystem experiment_lti(const ExperimentConfig& config) { return LtiSystem::double_integrator(config.sample_period); }

// One plant instance behind a common input/output interface.
class Simulator {
 public:
  explicit Simulator(const ExperimentConfig& config)
      : config_(config), noise_stds_(output_noise_stds(config)), lti_(experiment_lti(config)) {
    lti_state_ = Vector::Zero(lti_.state_dim());
  }

  void set_vehicle(const VehicleState& s) { vehicle_ = s; }
  void set_quadrotor(const QuadrotorState& s) { quad_ = s; }
  [[nodiscard]] const VehicleState& vehicle() const { return vehicle_; }
  [[nodiscard]] const QuadrotorState& quadrotor() const { return quad_; }
  [[nodiscard]] const Vector& lti_state() const { return lti_state_; }

  [[nodiscard]] Vector output() const {
    switch (config_.plant) {
      case PlantKind::vehicle:
        return vehicle_output(vehicle_);
      case PlantKind::quadrotor:
        return quad_.position;
      case PlantKind::lti:
        return lti_.output(lti_state_);
    }
    return {};
  }

  /// Advances one sample period; wind is drawn from `noise` before the step.
  void step(const Vector& u, std::mt19937_64& noise) {
    switch (config_.plant) {
      case PlantKind::vehicle:
        vehicle_ = vehicle_step(vehicle_, u.head<2>(), config_.sample_period);
        break;
      case PlantKind::quadrotor: {
        const Eigen::Vector3d wind = sample_wind(config_.noise.sigma_wind, noise);
        quad_ = quadrotor_step(quad_, u.head<4>(), wind, config_.sample_period);
        break;
      }
      case PlantKind::lti:
        lti_state_ = lti_.step(lti_state_, u);
        break;
    }
  }

  [[nodiscard]] Vector measure(std::mt19937_64& noise) const { return add_measurement_noise(output(), noise_stds_, noise); }

  [[nodiscard]] bool ground_contact() const { return config_.plant == PlantKind::quadrotor && quad_.position.z() < 0.0; }

 private:
  const ExperimentConfig& config_;
  Vector noise_stds_;
  LtiSystem lti_;
  Vector lti_state_;
  VehicleState vehicle_;
  QuadrotorState quad_;
};

struct CollectionAttempt {
  Matrix inputs;
  Matrix outputs;
  bool failed = false;
};

CollectionAttempt collect_vehicle(const ExperimentConfig& config, std::mt19937_64& rng, Index samples) {
  const ExcitationConfig& ex = config.excitation;
  const double dt = config.sample_period;
  Simulator sim(config);
  sim.set_vehicle({0.0, 0.0, 0.5 * (ex.speed_low + ex.speed_high), 0.0});
  CollectionAttempt out{Matrix(samples, 2), Matrix(samples, 4)};
  double accel = 0.0;
  double steer = 0.0;
  Index hold = 0;
  for (Index k = 0; k < samples; ++k) {
    if (hold == 0) {
      accel = uniform(rng, -ex.accel_range, ex.accel_range);
      steer = uniform(rng, -ex.steer_range, ex.steer_range);
      hold = std::max<Index>(1, std::llround(uniform(rng, ex.min_dwell_s, ex.max_dwell_s) / dt));
    }
    --hold;
    double a = accel;
    const double v = sim.vehicle().v;
    if (v < ex.speed_low) a = std::abs(accel);
    if (v > ex.speed_high) a = -std::abs(accel);
    Vector u = config.controller.input_bounds.clamp(Eigen::Vector2d(a, steer));
    sim.step(u, rng);
    out.inputs.row(k) = u.transpose();
    out.outputs.row(k) = sim.measure(rng).transpose();
    if (!out.outputs.row(k).allFinite()) out.failed = true;
  }
  return out;
}

CollectionAttempt collect_quadrotor(const ExperimentConfig& config, std::mt19937_64& rng, Index samples) {
  const ExcitationConfig& ex = config.excitation;
  const QuadrotorParams params;
  const double dt = config.sample_period;
  const Eigen::Vector3d hover_point(0.0, 0.0, 1.0);
  Simulator sim(config);
  QuadrotorState init;
  init.position = hover_point;
  sim.set_quadrotor(init);
  std::normal_distribution<double> normal(0.0, 1.0);

  CollectionAttempt out{Matrix(samples, 4), Matrix(samples, 3)};
  Eigen::Vector3d waypoint = hover_point;
  double remaining = 0.0;
  for (Index k = 0; k < samples; ++k) {
    if (remaining <= 0.0) {
      for (int i = 0; i < 3; ++i) waypoint(i) = hover_point(i) + uniform(rng, -ex.box_half_width, ex.box_half_width);
      remaining = uniform(rng, ex.waypoint_min_dwell_s, ex.waypoint_max_dwell_s);
    }
    remaining -= dt;
    const QuadrotorState& s = sim.quadrotor();
    const Eigen::Vector3d a = ex.position_gain * (waypoint - s.position) - ex.velocity_gain * s.velocity;
    const double yaw = s.attitude.z();
    const double ax = std::cos(yaw) * a.x() + std::sin(yaw) * a.y();
    const double ay = -std::sin(yaw) * a.x() + std::cos(yaw) * a.y();
    Vector u(4);
    u(0) = params.mass * (params.gravity + a.z()) + ex.thrust_dither * normal(rng);
    u(1) = std::clamp(-ay / params.gravity, -ex.max_tilt, ex.max_tilt) + ex.angle_dither * normal(rng);
    u(2) = std::clamp(ax / params.gravity, -ex.max_tilt, ex.max_tilt) + ex.angle_dither * normal(rng);
    u(3) = ex.angle_dither * normal(rng);
    u = config.controller.input_bounds.clamp(u);
    sim.step(u, rng);
    out.inputs.row(k) = u.transpose();
    out.outputs.row(k) = sim.measure(rng).transpose();
    if (sim.ground_contact() || !out.outputs.row(k).allFinite()) {
      out.failed = true;
      break;
    }
  }
  return out;
}

CollectionAttempt collect_lti(const ExperimentConfig& config, std::mt19937_64& rng, Index samples) {
  Simulator sim(config);
  std::normal_distribution<double> normal(0.0, config.excitation.input_std);
  const Index m = config.input_dim();
  const ExcitationConfig& ex = config.excitation;
  CollectionAttempt out{Matrix(samples, m), Matrix(samples, config.output_dim())};
  for (Index k = 0; k < samples; ++k) {
    const Vector& x = sim.lti_state();
    Vector u(m);
    for (Index i = 0; i < m; ++i) u(i) = normal(rng) - ex.lti_position_gain * x(0) - ex.lti_velocity_gain * x(1);
    sim.step(u, rng);
    out.inputs.row(k) = u.transpose();
    out.outputs.row(k) = sim.measure(rng).transpose();
  }
  return out;
}

std::string format_vector_csv(const Vector& v) {
  std::string out;
  for (Index i = 0; i < v.size(); ++i) {
    out += io::format_double(v(i));
    out += ',';
  }
  return out;
}

}  // namespace

std::string_view to_string(PlantKind plant) {
  switch (plant) {
    case PlantKind::vehicle:
      return "vehicle";
    case PlantKind::quadrotor:
      return "quadrotor";
    case PlantKind::lti:
      return "lti";
  }
  return "unknown";
}

PlantKind plant_from_string(std::string_view name) {
  if (name == "vehicle") return PlantKind::vehicle;
  if (name == "quadrotor") return PlantKind::quadrotor;
  if (name == "lti") return PlantKind::lti;
  throw Error(ErrorKind::config, "unknown plant '" + std::string(name) + "'");
}

std::string_view to_string(RunStatus status) {
  switch (status) {
    case RunStatus::completed:
      return "completed";
    case RunStatus::infeasible_abort:
      return "infeasible_abort";
    case RunStatus::ground_contact:
      return "ground_contact";
    case RunStatus::diverged:
      return "diverged";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------

ExperimentConfig ExperimentConfig::defaults(PlantKind plant) {
  ExperimentConfig c;
  c.plant = plant;
  c.name = std::string(to_string(plant));
  ControllerConfig& cc = c.controller;
  switch (plant) {
    case PlantKind::vehicle:
      c.sample_period = 0.1;
      c.duration_s = 20.0;
      c.n_s_values = {30, 60, 90};
      cc.past_length = 5;
      cc.horizon = 10;
      cc.output_weights = Eigen::Vector4d(1.0, 1.0, 0.1, 0.1);
      cc.input_weights = Eigen::Vector2d(0.1, 1.0);
      cc.input_reference = Eigen::Vector2d::Zero();
      cc.input_bounds = {Eigen::Vector2d(-5.0, -0.4), Eigen::Vector2d(5.0, 0.4)};
      break;
    case PlantKind::quadrotor: {
      const QuadrotorParams params;
      c.sample_period = 0.04;
      c.duration_s = 16.0;
      c.n_s_values = {40, 70, 100};
      cc.past_length = 5;
      cc.horizon = 15;
      cc.output_weights = Eigen::Vector3d(1.0, 1.0, 1.0);
      cc.input_weights = Eigen::Vector4d(0.1, 0.1, 0.1, 0.0);
      cc.input_reference = Eigen::Vector4d(params.hover_thrust(), 0.0, 0.0, 0.0);
      cc.input_bounds = {Eigen::Vector4d(0.0, -0.4, -0.4, -std::numbers::pi),
                         Eigen::Vector4d(2.0 * params.hover_thrust(), 0.4, 0.4, std::numbers::pi)};
      break;
    }
    case PlantKind::lti:
      c.sample_period = 0.1;
      c.duration_s = 20.0;
      c.strategies = {Strategy::full};
      c.n_s_values = {};
      c.seeds = {0};
      cc.past_length = 4;
      cc.horizon = 10;
      cc.output_weights = Vector::Constant(1, 10.0);
      cc.input_weights = Vector::Constant(1, 0.1);
      cc.input_reference = Vector::Zero(1);
      cc.lambda_g_bar = 1e-6;
      cc.lambda_sigma = 1e3;
      c.noise = NoiseConfig{0.0, 0.0, 0.0, 0.0, 0.0, 0};
      c.excitation.duration_s = 60.0;
      break;
  }
  return c;
}

Index ExperimentConfig::steps() const { return std::llround(duration_s / sample_period); }

AlignmentRule ExperimentConfig::alignment() const {
  switch (plant) {
    case PlantKind::vehicle:
      return AlignmentRule::planar_pose;
    case PlantKind::quadrotor:
      return AlignmentRule::translation_xyz;
    case PlantKind::lti:
      return AlignmentRule::none;
  }
  return AlignmentRule::none;
}

Vector ExperimentConfig::nominal_input() const {
  if (controller.input_reference.size() == input_dim()) return controller.input_reference;
  return Vector::Zero(input_dim());
}

Index ExperimentConfig::input_dim() const {
  switch (plant) {
    case PlantKind::vehicle:
      return 2;
    case PlantKind::quadrotor:
      return 4;
    case PlantKind::lti:
      return 1;
  }
  return 0;
}

Index ExperimentConfig::output_dim() const {
  switch (plant) {
    case PlantKind::vehicle:
      return 4;
    case PlantKind::quadrotor:
      return 3;
    case PlantKind::lti:
      return 1;
  }
  return 0;
}

void ExperimentConfig::validate() const {
  const auto fail = [](const std::string& msg) { throw Error(ErrorKind::config, msg); };
  if (!(sample_period > 0.0)) fail("experiment.sample_period must be positive");
  if (!(duration_s > 0.0) || steps() < 1) fail("experiment.duration_s must cover at least one sample");
  if (strategies.empty()) fail("experiment.strategies must not be empty");
  if (seeds.empty()) fail("experiment.seeds must not be empty");
  const bool needs_ns = std::any_of(strategies.begin(), strategies.end(), [](Strategy s) { return s != Strategy::full; });
  if (needs_ns && n_s_values.empty()) fail("experiment.n_s_values must not be empty for sampled strategies");
  for (const Index n : n_s_values) {
    if (n < 1) fail("experiment.n_s_values entries must be at least 1");
  }
  if (!(excitation.duration_s > 0.0)) fail("data.duration_s must be positive");
  if (excitation.max_attempts < 1) fail("data.max_attempts must be at least 1");
  if (!(excitation.min_dwell_s > 0.0) || excitation.min_dwell_s > excitation.max_dwell_s) {
    fail("data dwell range must satisfy 0 < min <= max");
  }
  if (!(excitation.waypoint_min_dwell_s > 0.0) || excitation.waypoint_min_dwell_s > excitation.waypoint_max_dwell_s) {
    fail("data waypoint dwell range must satisfy 0 < min <= max");
  }
  if (!(track.straight_length >= 0.0) || !(track.radius > 0.0) || !(track.straight_speed > 0.0) ||
      !(track.curve_speed > 0.0) || !(track.acceleration > 0.0)) {
    fail("reference track geometry and speeds must be positive");
  }
  if (!(figure8.radius > 0.0) || !(figure8.period > 0.0)) fail("reference figure-eight radius and period must be positive");
  if (plant == PlantKind::lti && lti_setpoint.size() != output_dim()) fail("reference.setpoint must have one entry per output");
  for (const double s : {noise.sigma_xy, noise.sigma_v, noise.sigma_psi_deg, noise.sigma_wind, noise.sigma_output}) {
    if (!(s >= 0.0)) fail("noise standard deviations must be nonnegative");
  }
  try {
    controller.validate(input_dim(), output_dim());
  } catch (const Error& e) {
    fail(std::string("controller: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

StadiumTrack::StadiumTrack(TrackConfig config) : config_(config) {
  if (!(config_.radius > 0.0) || !(config_.straight_length >= 0.0) || !(config_.acceleration > 0.0)) {
    throw Error(ErrorKind::invalid_argument, "track geometry must be positive");
  }
}

double StadiumTrack::lap_length() const {
  return 2.0 * config_.straight_length + 2.0 * std::numbers::pi * config_.radius;
}

TrackPoint StadiumTrack::at(double s) const {
  const double L = config_.straight_length;
  const double R = config_.radius;
  const double arc = std::numbers::pi * R;
  s = std::fmod(s, lap_length());
  if (s < 0.0) s += lap_length();
  TrackPoint p;
  if (s < L) {
    p = {-0.5 * L + s, -R, 0.0, 0.0};
  } else if (s < L + arc) {
    const double th = (s - L) / R;
    p = {0.5 * L + R * std::sin(th), -R * std::cos(th), th, 1.0 / R};
  } else if (s < 2.0 * L + arc) {
    p = {0.5 * L - (s - L - arc), R, std::numbers::pi, 0.0};
  } else {
    const double th = (s - 2.0 * L - arc) / R;
    p = {-0.5 * L - R * std::sin(th), R * std::cos(th), std::numbers::pi + th, 1.0 / R};
  }
  p.heading = wrap_angle(p.heading);
  return p;
}

double StadiumTrack::speed_at(double s) const {
  const double L = config_.straight_length;
  const double arc = std::numbers::pi * config_.radius;
  const double lap = lap_length();
  s = std::fmod(s, lap);
  if (s < 0.0) s += lap;
  const bool on_arc = (s >= L && s < L + arc) || s >= 2.0 * L + arc;
  if (on_arc) return config_.curve_speed;
  const double v_low = std::min(config_.curve_speed, config_.straight_speed);
  double v = config_.straight_speed;
  for (const double b : {0.0, L, L + arc, 2.0 * L + arc, lap}) {
    v = std::min(v, std::sqrt(v_low * v_low + 2.0 * config_.acceleration * std::abs(s - b)));
  }
  return v;
}

Matrix reference_vehicle_track(const TrackConfig& config, double dt, Index steps) {
  const StadiumTrack track(config);
  constexpr int kSubsteps = 10;
  Matrix out(steps, 4);
  double s = 0.0;
  for (Index k = 0; k < steps; ++k) {
    const TrackPoint p = track.at(s);
    out.row(k) << p.x, p.y, track.speed_at(s), p.heading;
    for (int i = 0; i < kSubsteps; ++i) s += track.speed_at(s) * dt / kSubsteps;
  }
  return out;
}

Eigen::Vector3d figure8_at(const Figure8Config& config, double t) {
  const double w = 2.0 * std::numbers::pi / config.period;
  return {config.radius * std::sin(w * t), 0.5 * config.radius * std::sin(2.0 * w * t),
          config.height + config.z_amplitude * std::sin(w * t)};
}

Matrix reference_quadrotor_figure8(const Figure8Config& config, double dt, Index steps) {
  if (!(config.radius > 0.0)) throw Error(ErrorKind::invalid_argument, "figure-eight radius must be positive");
  Matrix out(steps, 3);
  for (Index k = 0; k < steps; ++k) out.row(k) = figure8_at(config, static_cast<double>(k) * dt).transpose();
  return out;
}

Matrix experiment_reference(const ExperimentConfig& config) {
  const Index rows = config.steps() + config.controller.horizon + 1;
  switch (config.plant) {
    case PlantKind::vehicle:
      return reference_vehicle_track(config.track, config.sample_period, rows);
    case PlantKind::quadrotor:
      return reference_quadrotor_figure8(config.figure8, config.sample_period, rows);
    case PlantKind::lti:
      return config.lti_setpoint.transpose().replicate(rows, 1);
  }
  return {};
}

Matrix reference_window(const Matrix& reference, Index first, Index count) {
  Matrix out(count, reference.cols());
  for (Index k = 0; k < count; ++k) out.row(k) = reference.row(std::min(first + 1 + k, reference.rows() - 1));
  return out;
}

// ---------------------------------------------------------------------------

CollectedData collect_excitation_data(const ExperimentConfig& config) {
  const Index samples = std::llround(config.excitation.duration_s / config.sample_period);
  if (samples < 1) throw Error(ErrorKind::invalid_argument, "excitation duration must cover at least one sample");
  const Index order = config.controller.past_length + config.controller.horizon + 4;
  for (int attempt = 0; attempt < config.excitation.max_attempts; ++attempt) {
    std::mt19937_64 rng = make_stream(config.excitation.seed, static_cast<std::uint32_t>(attempt));
    CollectionAttempt run;
    switch (config.plant) {
      case PlantKind::vehicle:
        run = collect_vehicle(config, rng, samples);
        break;
      case PlantKind::quadrotor:
        run = collect_quadrotor(config, rng, samples);
        break;
      case PlantKind::lti:
        run = collect_lti(config, rng, samples);
        break;
    }
    if (run.failed) {
      spdlog::warn("excitation attempt {} failed, retrying with the next sub-seed", attempt);
      continue;
    }
    CollectedData out{Dataset({Trajectory(std::move(run.inputs), std::move(run.outputs), config.sample_period)})};
    out.excitation_order = order;
    out.attempts = attempt + 1;
    out.persistently_exciting = is_persistently_exciting(out.dataset.trajectories().front().inputs(), order);
    if (out.persistently_exciting) {
      spdlog::info("excitation input is persistently exciting of order {}", order);
    } else {
      spdlog::warn("excitation input is not persistently exciting of order {}", order);
    }
    return out;
  }
  throw Error(ErrorKind::insufficient_data, "excitation failed after " + std::to_string(config.excitation.max_attempts) +
                                                " attempts");
}

// ---------------------------------------------------------------------------

std::string RunRecord::cell_key() const {
  return std::string(to_string(strategy)) + "_ns" + std::to_string(n_s) + "_seed" + std::to_string(seed);
}

bool RunRecord::flagged() const {
  const auto controlled = std::count_if(steps.begin(), steps.end(), [](const StepLog& s) { return s.status != "warmup"; });
  return controlled > 0 && static_cast<double>(unsolved_steps) > 0.01 * static_cast<double>(controlled);
}

RunRecord run_closed_loop(const ExperimentConfig& config, const PreprocessedData& data, const Matrix& reference,
                          Strategy strategy, Index n_s, std::uint64_t seed) {
  ControllerConfig cc = config.controller;
  cc.strategy = strategy;
  cc.sample_count = std::max<Index>(1, n_s);
  const DeepcController controller(data, cc);
  const Index horizon = cc.horizon;
  const Index steps = config.steps();
  if (reference.rows() < 1 || reference.cols() != config.output_dim()) {
    throw Error(ErrorKind::dimension_mismatch, "reference does not match the plant outputs");
  }

  std::mt19937_64 noise = make_stream(seed, 1);
  std::mt19937_64 sampling = make_stream(seed, 2);

  Simulator sim(config);
  const Vector r0 = reference.row(0).transpose();
  if (config.plant == PlantKind::vehicle) sim.set_vehicle({r0(0), r0(1), r0(2), r0(3)});
  if (config.plant == PlantKind::quadrotor) {
    QuadrotorState q;
    q.position = r0.head<3>();
    sim.set_quadrotor(q);
  }

  RunRecord record;
  record.plant = config.plant;
  record.strategy = strategy;
  record.n_s = n_s;
  record.seed = seed;
  record.steps.reserve(static_cast<std::size_t>(steps));

  ControllerState state = ControllerState::initial(cc.past_length, config.nominal_input());
  Index consecutive_unsolved = 0;
  for (Index k = 0; k < steps; ++k) {
    StepLog log;
    log.step = k;
    log.t = static_cast<double>(k + 1) * config.sample_period;
    const std::uint64_t step_seed = sampling();
    std::optional<StepResult> result;
    if (state.warmed_up()) {
      result = controller.control_step(state, reference_window(reference, k, horizon), step_seed);
      log.u = result->applied_input;
      log.solve_ms = result->solve_time * 1e3;
      log.sigma_min = result->sigma_min;
      log.status = std::string(to_string(result->qp_status));
      log.selected = result->selected_indices;
      if (result->qp_status == QpStatus::solved) {
        consecutive_unsolved = 0;
      } else {
        ++consecutive_unsolved;
        ++record.unsolved_steps;
      }
    } else {
      log.u = state.last_applied_input;
      log.status = "warmup";
    }

    sim.step(log.u, noise);
    log.y = sim.output();
    const Vector measured = sim.measure(noise);
    state.commit(log.u, measured);
    if (result) {
      state.warm_start = std::move(result->solution);
      state.warm_start_indices = std::move(result->selected_indices);
    }

    log.r = reference.row(std::min(k + 1, reference.rows() - 1)).transpose();
    if (config.plant == PlantKind::vehicle) log.r(3) = log.y(3) + wrap_angle(log.r(3) - log.y(3));
    log.e_t = tracking_error(log.y, log.r, cc.output_weights);
    record.steps.push_back(std::move(log));

    if (sim.ground_contact()) {
      record.status = RunStatus::ground_contact;
      break;
    }
    if (!measured.allFinite() || measured.cwiseAbs().maxCoeff() > kDivergenceLimit) {
      record.status = RunStatus::diverged;
      break;
    }
    if (consecutive_unsolved >= kMaxConsecutiveUnsolved) {
      record.status = RunStatus::infeasible_abort;
      break;
    }
  }
  if (record.flagged()) {
    spdlog::warn("{} {}: {} unsolved controller steps", to_string(config.plant), record.cell_key(),
                 record.unsolved_steps);
  }
  return record;
}

std::vector<RunCell> enumerate_cells(const ExperimentConfig& config, Index column_count) {
  std::vector<RunCell> cells;
  for (const Strategy s : config.strategies) {
    if (s == Strategy::full) {
      for (const std::uint64_t seed : config.seeds) cells.push_back({s, column_count, seed});
      continue;
    }
    for (const Index n : config.n_s_values) {
      for (const std::uint64_t seed : config.seeds) cells.push_back({s, n, seed});
    }
  }
  return cells;
}

std::vector<RunRecord> run_cells(const ExperimentConfig& config, const PreprocessedData& data,
                                 const std::vector<RunCell>& cells, unsigned jobs) {
  const Matrix reference = experiment_reference(config);
  std::vector<RunRecord> records(cells.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        const RunCell& c = cells[i];
        records[i] = run_closed_loop(config, data, reference, c.strategy, c.n_s, c.seed);
        spdlog::info("{} {} finished: {}", config.name, records[i].cell_key(), to_string(records[i].status));
      } catch (...) {
        const std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(cells.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return records;
}

// ---------------------------------------------------------------------------

double nearest_rank_percentile(std::vector<double> values, double pct) {
  if (values.empty()) throw Error(ErrorKind::invalid_argument, "percentile of an empty sample");
  if (!(pct >= 0.0 && pct <= 100.0)) throw Error(ErrorKind::invalid_argument, "percentile must lie in [0, 100]");
  std::sort(values.begin(), values.end());
  const auto n = static_cast<double>(values.size());
  const auto rank = static_cast<std::size_t>(std::max(1.0, std::ceil(pct / 100.0 * n)));
  return values[std::min(rank, values.size()) - 1];
}

std::vector<CellSummary> aggregate(const std::vector<RunRecord>& records) {
  if (records.empty()) throw Error(ErrorKind::invalid_argument, "nothing to aggregate");
  struct Group {
    CellSummary summary;
    std::vector<double> errors;
    std::vector<double> times;
    std::set<std::uint64_t> seeds;
  };
  std::vector<Group> groups;
  for (const RunRecord& r : records) {
    auto it = std::find_if(groups.begin(), groups.end(), [&](const Group& g) {
      return g.summary.plant == r.plant && g.summary.strategy == r.strategy && g.summary.n_s == r.n_s;
    });
    if (it == groups.end()) {
      groups.push_back({});
      it = std::prev(groups.end());
      it->summary.plant = r.plant;
      it->summary.strategy = r.strategy;
      it->summary.n_s = r.n_s;
    }
    it->seeds.insert(r.seed);
    if (r.status != RunStatus::completed) ++it->summary.failures;
    for (const StepLog& s : r.steps) {
      if (s.status == "warmup") continue;
      it->errors.push_back(s.e_t);
      it->times.push_back(s.solve_ms);
    }
  }
  std::vector<CellSummary> out;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (Group& g : groups) {
    CellSummary s = g.summary;
    s.seed_count = static_cast<Index>(g.seeds.size());
    const bool any = !g.errors.empty();
    s.median_err = any ? nearest_rank_percentile(g.errors, 50.0) : nan;
    s.q1_err = any ? nearest_rank_percentile(g.errors, 25.0) : nan;
    s.q3_err = any ? nearest_rank_percentile(g.errors, 75.0) : nan;
    s.p99_ms = any ? nearest_rank_percentile(g.times, 99.0) : nan;
    s.max_ms = any ? *std::max_element(g.times.begin(), g.times.end()) : nan;
    out.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------------------

void write_run_csv(const RunRecord& record, const std::filesystem::path& path) {
  if (record.steps.empty()) throw Error(ErrorKind::invalid_argument, "run has no steps");
  const StepLog& first = record.steps.front();
  std::ostringstream out;
  out << "step,t,";
  for (Index i = 0; i < first.y.size(); ++i) out << "y_" << i << ',';
  for (Index i = 0; i < first.r.size(); ++i) out << "r_" << i << ',';
  for (Index i = 0; i < first.u.size(); ++i) out << "u_" << i << ',';
  out << "e_t,solve_ms,sigma_min,status\n";
  for (const StepLog& s : record.steps) {
    out << s.step << ',' << io::format_double(s.t) << ',' << format_vector_csv(s.y) << format_vector_csv(s.r)
        << format_vector_csv(s.u) << io::format_double(s.e_t) << ',' << io::format_double(s.solve_ms) << ','
        << io::format_double(s.sigma_min) << ',' << s.status << '\n';
  }
  io::write_file_atomically(path, out.str());
}

void write_summary_csv(const std::vector<CellSummary>& summary, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "plant,strategy,n_s,seed_count,median_err,q1_err,q3_err,p99_ms,max_ms,failures\n";
  for (const CellSummary& s : summary) {
    out << to_string(s.plant) << ',' << to_string(s.strategy) << ',' << s.n_s << ',' << s.seed_count << ','
        << io::format_double(s.median_err) << ',' << io::format_double(s.q1_err) << ','
        << io::format_double(s.q3_err) << ',' << io::format_double(s.p99_ms) << ',' << io::format_double(s.max_ms)
        << ',' << s.failures << '\n';
  }
  io::write_file_atomically(path, out.str());
}

std::vector<CellSummary> read_summary_csv(const std::filesystem::path& path) {
  const io::CsvTable table = io::read_csv(path);
  std::vector<CellSummary> out;
  const auto col = [&](std::string_view name) { return table.column(name); };
  const std::size_t c_plant = col("plant"), c_strategy = col("strategy"), c_ns = col("n_s"),
                    c_seeds = col("seed_count"), c_med = col("median_err"), c_q1 = col("q1_err"),
                    c_q3 = col("q3_err"), c_p99 = col("p99_ms"), c_max = col("max_ms"), c_fail = col("failures");
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    try {
      CellSummary s;
      s.plant = plant_from_string(row.at(c_plant));
      s.strategy = strategy_from_string(row.at(c_strategy));
      s.n_s = std::stoll(row.at(c_ns));
      s.seed_count = std::stoll(row.at(c_seeds));
      s.median_err = std::stod(row.at(c_med));
      s.q1_err = std::stod(row.at(c_q1));
      s.q3_err = std::stod(row.at(c_q3));
      s.p99_ms = std::stod(row.at(c_p99));
      s.max_ms = std::stod(row.at(c_max));
      s.failures = std::stoll(row.at(c_fail));
      out.push_back(s);
    } catch (const std::exception& e) {
      throw Error(ErrorKind::io, path.string() + ": line " + std::to_string(i + 2) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace deepc
