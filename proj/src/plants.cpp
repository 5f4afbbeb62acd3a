#include "deepc/plants.hpp"

#include "deepc/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace deepc {

double wrap_angle(double angle) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double wrapped = std::fmod(angle + std::numbers::pi, two_pi);
  if (wrapped < 0.0) wrapped += two_pi;
  wrapped -= std::numbers::pi;
  // fmod maps +pi to -pi; the interval is half-open at -pi.
  return wrapped <= -std::numbers::pi ? std::numbers::pi : wrapped;
}

VehicleState vehicle_step(const VehicleState& s, const Eigen::Vector2d& input, double dt, const VehicleParams& params) {
  const double accel = std::clamp(input(0), -params.max_accel, params.max_accel);
  const double steer = std::clamp(input(1), -params.max_steer, params.max_steer);
  VehicleState next;
  next.x = s.x + s.v * std::cos(s.psi) * dt;
  next.y = s.y + s.v * std::sin(s.psi) * dt;
  next.v = std::max(0.0, s.v + accel * dt);
  next.psi = wrap_angle(s.psi + s.v / params.wheelbase * std::tan(steer) * dt);
  return next;
}

Eigen::Vector4d vehicle_output(const VehicleState& s) { return {s.x, s.y, s.v, s.psi}; }

Eigen::Matrix3d rotation_from_euler(const Eigen::Vector3d& att) {
  return (Eigen::AngleAxisd(att(2), Eigen::Vector3d::UnitZ()) * Eigen::AngleAxisd(att(1), Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(att(0), Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

QuadrotorState quadrotor_step(const QuadrotorState& state, const Eigen::Vector4d& command, const Eigen::Vector3d& wind,
                              double dt, const QuadrotorParams& params) {
  if (!(dt > 0.0)) {
    throw Error(ErrorKind::invalid_argument, "quadrotor step needs dt > 0");
  }
  const int substeps = std::max(1, static_cast<int>(std::ceil(dt / params.internal_dt - 1e-9)));
  const double h = dt / substeps;
  const Eigen::Vector3d attitude_ref = command.tail<3>();
  const double thrust = command(0);
  const auto& pid = params.attitude_pid;
  const Eigen::Vector3d gravity(0.0, 0.0, -params.gravity);

  QuadrotorState s = state;
  for (int i = 0; i < substeps; ++i) {
    Eigen::Vector3d error = attitude_ref - s.attitude;
    error(2) = wrap_angle(error(2));
    s.attitude_error_integral += error * h;
    const Eigen::Vector3d derivative = (error - s.previous_attitude_error) / h;
    s.previous_attitude_error = error;

    const Eigen::Vector3d accel =
        rotation_from_euler(s.attitude) * Eigen::Vector3d(0.0, 0.0, thrust) / params.mass + gravity + wind / params.mass;

    s.angular_velocity = pid.kp * error + pid.ki * s.attitude_error_integral + pid.kd * derivative;
    s.position += s.velocity * h;
    s.velocity += accel * h;
    s.attitude += s.angular_velocity * h;
    s.attitude(2) = wrap_angle(s.attitude(2));
  }
  return s;
}

Eigen::VectorXd LtiSystem::step(const Eigen::VectorXd& state, const Eigen::VectorXd& input) const {
  return A * state + B * input;
}

Eigen::VectorXd LtiSystem::output(const Eigen::VectorXd& state) const { return C * state; }

LtiSystem LtiSystem::double_integrator(double dt) {
  LtiSystem sys;
  sys.A.resize(2, 2);
  sys.A << 1.0, dt, 0.0, 1.0;
  sys.B.resize(2, 1);
  sys.B << 0.0, dt;
  sys.C.resize(1, 2);
  sys.C << 1.0, 0.0;
  return sys;
}

Eigen::Vector4d NoiseConfig::vehicle_output_stds() const {
  return {sigma_xy, sigma_xy, sigma_v, sigma_psi_deg * std::numbers::pi / 180.0};
}

Eigen::VectorXd add_measurement_noise(const Eigen::VectorXd& output, const Eigen::VectorXd& stds,
                                      std::mt19937_64& rng) {
  if (stds.size() != output.size()) {
    throw Error(ErrorKind::dimension_mismatch, "noise std count does not match output dimension");
  }
  std::normal_distribution<double> standard(0.0, 1.0);
  Eigen::VectorXd out = output;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    const double z = standard(rng);
    if (stds(i) > 0.0) out(i) += stds(i) * z;
  }
  return out;
}

Eigen::Vector3d sample_wind(double sigma_wind, std::mt19937_64& rng) {
  std::normal_distribution<double> standard(0.0, 1.0);
  Eigen::Vector3d w;
  for (int i = 0; i < 3; ++i) w(i) = sigma_wind * standard(rng);
  return w;
}

}  // namespace deepc
