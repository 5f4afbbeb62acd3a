#pragma once

#include <Eigen/Dense>

#include <random>

namespace deepc {

/// Wraps an angle to (-pi, pi].
[[nodiscard]] double wrap_angle(double angle);

// ---------------------------------------------------------------------------
// Kinematic single-track vehicle, state (x, y, v, psi), input (a, delta).

struct VehicleParams {
  double wheelbase = 0.33;  // m
  double max_accel = 5.0;   // m/s^2
  double max_steer = 0.4;   // rad
};

struct VehicleState {
  double x = 0.0;
  double y = 0.0;
  double v = 0.0;
  double psi = 0.0;
};

/// One forward-Euler step. Inputs are clamped to the actuator limits and the
/// speed is kept nonnegative.
[[nodiscard]] VehicleState vehicle_step(const VehicleState& state, const Eigen::Vector2d& input, double dt,
                                        const VehicleParams& params = {});

/// Measured outputs (x, y, v, psi).
[[nodiscard]] Eigen::Vector4d vehicle_output(const VehicleState& state);

// ---------------------------------------------------------------------------
// Quadrotor with an attitude PID inner loop. The command is
// (thrust [N], roll_ref, pitch_ref, yaw_ref [rad]).

struct PidGains {
  double kp = 0.0;
  double ki = 0.0;
  double kd = 0.0;
};

struct QuadrotorParams {
  double mass = 0.027;     // kg
  double gravity = 9.81;   // m/s^2
  double internal_dt = 0.01;
  /// Proportional gain 1/0.15 gives a first-order attitude response with a
  /// 0.15 s time constant; the angular rate follows the PID output directly.
  PidGains attitude_pid{1.0 / 0.15, 0.0, 0.0};

  [[nodiscard]] double hover_thrust() const { return mass * gravity; }
};

struct QuadrotorState {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();
  Eigen::Vector3d attitude = Eigen::Vector3d::Zero();  // roll, pitch, yaw
  Eigen::Vector3d angular_velocity = Eigen::Vector3d::Zero();
  Eigen::Vector3d attitude_error_integral = Eigen::Vector3d::Zero();
  Eigen::Vector3d previous_attitude_error = Eigen::Vector3d::Zero();
};

/// Body-to-world rotation for ZYX Euler angles (roll, pitch, yaw).
[[nodiscard]] Eigen::Matrix3d rotation_from_euler(const Eigen::Vector3d& attitude);

/// Advances the quadrotor by `dt`, integrating with substeps of at most
/// `params.internal_dt`. `wind` is an external force in the world frame.
[[nodiscard]] QuadrotorState quadrotor_step(const QuadrotorState& state, const Eigen::Vector4d& command,
                                            const Eigen::Vector3d& wind, double dt,
                                            const QuadrotorParams& params = {});

// ---------------------------------------------------------------------------
// Discrete LTI plant x+ = Ax + Bu, y = Cx.

struct LtiSystem {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::MatrixXd C;

  [[nodiscard]] Eigen::Index state_dim() const { return A.rows(); }
  [[nodiscard]] Eigen::Index input_dim() const { return B.cols(); }
  [[nodiscard]] Eigen::Index output_dim() const { return C.rows(); }

  [[nodiscard]] Eigen::VectorXd step(const Eigen::VectorXd& state, const Eigen::VectorXd& input) const;
  [[nodiscard]] Eigen::VectorXd output(const Eigen::VectorXd& state) const;

  /// Position/velocity double integrator with position output.
  static LtiSystem double_integrator(double dt);
};

// ---------------------------------------------------------------------------

struct NoiseConfig {
  double sigma_xy = 0.05;       // m
  double sigma_v = 0.05;        // m/s
  double sigma_psi_deg = 0.6;   // deg
  double sigma_wind = 0.01;     // N
  double sigma_output = 0.0;    // LTI output noise
  std::uint64_t seed = 0;

  [[nodiscard]] Eigen::Vector4d vehicle_output_stds() const;
};

/// Adds independent zero-mean Gaussian noise per channel. One standard normal
/// draw is consumed per channel even when its std is zero, so the stream stays
/// aligned across configurations.
[[nodiscard]] Eigen::VectorXd add_measurement_noise(const Eigen::VectorXd& output, const Eigen::VectorXd& stds,
                                                    std::mt19937_64& rng);

/// Zero-mean Gaussian force with the configured std per axis.
[[nodiscard]] Eigen::Vector3d sample_wind(double sigma_wind, std::mt19937_64& rng);

}  // namespace deepc
