#pragma once

#include "deepc/deepc_controller.hpp"
#include "deepc/plants.hpp"
#include "deepc/trajectory_data.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace deepc {

enum class PlantKind { vehicle, quadrotor, lti };

[[nodiscard]] std::string_view to_string(PlantKind plant);
[[nodiscard]] PlantKind plant_from_string(std::string_view name);

struct ExcitationConfig {
  double duration_s = 300.0;
  std::uint64_t seed = 1000;
  int max_attempts = 5;
  // vehicle: inputs uniform in [-accel, accel] x [-steer, steer], held 0.2-1.0 s
  double accel_range = 5.0;
  double steer_range = 0.4;
  double min_dwell_s = 0.2;
  double max_dwell_s = 1.0;
  double speed_low = 0.5;  // acceleration is forced nonnegative below this speed
  double speed_high = 3.5;  // and nonpositive above this one
  // quadrotor: waypoints in a cube around hover tracked by a PD position law
  double box_half_width = 0.5;
  double waypoint_min_dwell_s = 1.0;
  double waypoint_max_dwell_s = 3.0;
  double position_gain = 4.0;
  double velocity_gain = 3.0;
  double max_tilt = 0.35;
  double thrust_dither = 0.02;  // N
  double angle_dither = 0.05;   // rad, also applied to the yaw reference
  // lti: Gaussian inputs added to a stabilizing state feedback
  double input_std = 1.0;
  double lti_position_gain = 1.0;
  double lti_velocity_gain = 1.5;
};

struct TrackConfig {
  double straight_length = 6.0;
  double radius = 2.0;
  double straight_speed = 2.5;
  double curve_speed = 1.5;
  double acceleration = 1.0;
};

struct Figure8Config {
  double radius = 0.3;
  double height = 1.0;
  double z_amplitude = 0.1;
  double period = 8.0;
};

struct ExperimentConfig {
  std::string name = "vehicle";
  PlantKind plant = PlantKind::vehicle;
  double sample_period = 0.1;
  double duration_s = 20.0;
  std::vector<Strategy> strategies{Strategy::contextual, Strategy::random, Strategy::full};
  std::vector<Index> n_s_values{30, 60, 90};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  ControllerConfig controller;
  NoiseConfig noise;
  ExcitationConfig excitation;
  TrackConfig track;
  Figure8Config figure8;
  Vector lti_setpoint = Vector::Constant(1, 1.0);
  std::string dataset_path;  // empty: collect from excitation.seed

  [[nodiscard]] static ExperimentConfig defaults(PlantKind plant);
  [[nodiscard]] Index steps() const;
  [[nodiscard]] AlignmentRule alignment() const;
  [[nodiscard]] Vector nominal_input() const;
  [[nodiscard]] Index input_dim() const;
  [[nodiscard]] Index output_dim() const;
  void validate() const;
};

// ---------------------------------------------------------------------------
// References

struct TrackPoint {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  double curvature = 0.0;
};

/// Closed course of two straights joined by two 180 degree arcs, traversed
/// counterclockwise from the start of the lower straight.
class StadiumTrack {
 public:
  explicit StadiumTrack(TrackConfig config);

  [[nodiscard]] double lap_length() const;
  [[nodiscard]] TrackPoint at(double s) const;
  /// Trapezoidal profile: straight speed on straights, curve speed on arcs,
  /// transitions limited by the configured acceleration.
  [[nodiscard]] double speed_at(double s) const;

 private:
  TrackConfig config_;
};

/// Rows (x, y, v, psi) sampled every `dt` while traversing the track at the
/// profile speed, starting at s = 0.
[[nodiscard]] Matrix reference_vehicle_track(const TrackConfig& config, double dt, Index steps);

[[nodiscard]] Eigen::Vector3d figure8_at(const Figure8Config& config, double t);

/// Rows (x, y, z) sampled every `dt`.
[[nodiscard]] Matrix reference_quadrotor_figure8(const Figure8Config& config, double dt, Index steps);

/// Full reference for the experiment, `steps() + horizon + 1` rows.
[[nodiscard]] Matrix experiment_reference(const ExperimentConfig& config);

/// Rows first+1 .. first+count of `reference`, repeating the last row past the end.
[[nodiscard]] Matrix reference_window(const Matrix& reference, Index first, Index count);

// ---------------------------------------------------------------------------
// Data collection

struct CollectedData {
  Dataset dataset;
  bool persistently_exciting = false;
  Index excitation_order = 0;
  int attempts = 0;
};

/// Records one excitation trajectory of `excitation.duration_s` with measurement
/// noise applied. Retries with the next sub-seed when the plant fails.
[[nodiscard]] CollectedData collect_excitation_data(const ExperimentConfig& config);

// ---------------------------------------------------------------------------
// Closed loop

enum class RunStatus { completed, infeasible_abort, ground_contact, diverged };

[[nodiscard]] std::string_view to_string(RunStatus status);

struct StepLog {
  Index step = 0;
  double t = 0.0;
  Vector y;  // true plant output after the step
  Vector r;  // reference, heading unwrapped next to y
  Vector u;  // applied input
  double e_t = 0.0;
  double solve_ms = 0.0;
  double sigma_min = 0.0;
  std::string status;  // warmup or the QP status
  std::vector<Index> selected;
};

struct RunRecord {
  PlantKind plant = PlantKind::vehicle;
  Strategy strategy = Strategy::contextual;
  Index n_s = 0;
  std::uint64_t seed = 0;
  std::vector<StepLog> steps;
  RunStatus status = RunStatus::completed;
  Index unsolved_steps = 0;

  [[nodiscard]] std::string cell_key() const;
  /// More than 1% of controller steps unsolved.
  [[nodiscard]] bool flagged() const;
};

/// Consecutive unsolved steps that abort a run.
inline constexpr Index kMaxConsecutiveUnsolved = 10;

/// Simulates one run. Plant noise and selection randomness come from two
/// independent streams derived from `seed`.
[[nodiscard]] RunRecord run_closed_loop(const ExperimentConfig& config, const PreprocessedData& data,
                                        const Matrix& reference, Strategy strategy, Index n_s, std::uint64_t seed);

struct RunCell {
  Strategy strategy = Strategy::contextual;
  Index n_s = 0;
  std::uint64_t seed = 0;
};

/// All (strategy, n_s, seed) cells; the full strategy appears once per seed
/// with n_s equal to the column count.
[[nodiscard]] std::vector<RunCell> enumerate_cells(const ExperimentConfig& config, Index column_count);

/// Runs all cells on up to `jobs` threads; results are ordered as the cells.
[[nodiscard]] std::vector<RunRecord> run_cells(const ExperimentConfig& config, const PreprocessedData& data,
                                               const std::vector<RunCell>& cells, unsigned jobs);

// ---------------------------------------------------------------------------
// Aggregation

/// Nearest-rank percentile of unsorted values, pct in [0, 100].
[[nodiscard]] double nearest_rank_percentile(std::vector<double> values, double pct);

struct CellSummary {
  PlantKind plant = PlantKind::vehicle;
  Strategy strategy = Strategy::contextual;
  Index n_s = 0;
  Index seed_count = 0;
  double median_err = 0.0;
  double q1_err = 0.0;
  double q3_err = 0.0;
  double p99_ms = 0.0;
  double max_ms = 0.0;
  Index failures = 0;
};

/// Concatenates e_t and solve times of controller steps (warm-up excluded)
/// across seeds per (strategy, n_s).
[[nodiscard]] std::vector<CellSummary> aggregate(const std::vector<RunRecord>& records);

// ---------------------------------------------------------------------------
// Output files

void write_run_csv(const RunRecord& record, const std::filesystem::path& path);
void write_summary_csv(const std::vector<CellSummary>& summary, const std::filesystem::path& path);
[[nodiscard]] std::vector<CellSummary> read_summary_csv(const std::filesystem::path& path);

}  // namespace deepc
