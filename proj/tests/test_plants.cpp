#include "deepc/plants.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

namespace deepc {
namespace {

TEST(WrapAngle, HalfOpenInterval) {
  EXPECT_DOUBLE_EQ(wrap_angle(std::numbers::pi), std::numbers::pi);
  EXPECT_DOUBLE_EQ(wrap_angle(-std::numbers::pi), std::numbers::pi);
  EXPECT_NEAR(wrap_angle(3.0 * std::numbers::pi / 2.0), -std::numbers::pi / 2.0, 1e-15);
  EXPECT_NEAR(wrap_angle(0.3 + 4.0 * std::numbers::pi), 0.3, 1e-12);
  EXPECT_DOUBLE_EQ(wrap_angle(0.0), 0.0);
}

TEST(Vehicle, StraightLine) {
  const VehicleState next = vehicle_step({0.0, 0.0, 1.0, 0.0}, {0.0, 0.0}, 0.1);
  EXPECT_DOUBLE_EQ(next.x, 0.1);
  EXPECT_DOUBLE_EQ(next.y, 0.0);
  EXPECT_DOUBLE_EQ(next.v, 1.0);
  EXPECT_DOUBLE_EQ(next.psi, 0.0);
}

TEST(Vehicle, AccelerationFromRest) {
  const VehicleState next = vehicle_step({1.0, 2.0, 0.0, 0.4}, {1.0, 0.0}, 0.1);
  EXPECT_DOUBLE_EQ(next.v, 0.1);
  EXPECT_EQ(next.x, 1.0);
  EXPECT_EQ(next.y, 2.0);
}

TEST(Vehicle, YawRate) {
  const VehicleState next = vehicle_step({0.0, 0.0, 1.0, 0.0}, {0.0, 0.1}, 0.1);
  const double expected = 0.1 * std::tan(0.1) / 0.33;
  EXPECT_NEAR(next.psi, expected, 1e-15);
  EXPECT_NEAR(next.psi, 0.0304, 1e-4);
}

TEST(Vehicle, InputsClampedAndSpeedNonnegative) {
  const VehicleState a = vehicle_step({0.0, 0.0, 1.0, 0.0}, {100.0, 10.0}, 0.1);
  const VehicleState b = vehicle_step({0.0, 0.0, 1.0, 0.0}, {5.0, 0.4}, 0.1);
  EXPECT_EQ(a.v, b.v);
  EXPECT_EQ(a.psi, b.psi);
  const VehicleState c = vehicle_step({0.0, 0.0, 0.2, 0.0}, {-5.0, 0.0}, 0.1);
  EXPECT_EQ(c.v, 0.0);
}

TEST(Vehicle, HeadingStaysWrapped) {
  VehicleState s{0.0, 0.0, 3.0, 3.1};
  for (int i = 0; i < 200; ++i) {
    s = vehicle_step(s, {0.0, 0.4}, 0.05);
    EXPECT_GT(s.psi, -std::numbers::pi);
    EXPECT_LE(s.psi, std::numbers::pi);
  }
}

TEST(Vehicle, ZeroSteeringPreservesHeadingAndDistance) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> dist(-3.0, 3.0);
  for (int trial = 0; trial < 100; ++trial) {
    const VehicleState s{dist(rng), dist(rng), std::abs(dist(rng)), dist(rng)};
    const VehicleState next = vehicle_step(s, {dist(rng), 0.0}, 0.05);
    EXPECT_EQ(next.psi, wrap_angle(s.psi));
    EXPECT_NEAR(std::hypot(next.x - s.x, next.y - s.y), s.v * 0.05, 1e-14);
  }
}

TEST(Quadrotor, HoverIsEquilibrium) {
  const QuadrotorParams params;
  QuadrotorState s;
  s.position = {0.3, -0.2, 1.0};
  const Eigen::Vector4d command(params.hover_thrust(), 0.0, 0.0, 0.0);
  for (int i = 0; i < 50; ++i) {
    const QuadrotorState next = quadrotor_step(s, command, Eigen::Vector3d::Zero(), 0.04, params);
    EXPECT_LE((next.position - s.position).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((next.velocity - s.velocity).cwiseAbs().maxCoeff(), 1e-12);
    s = next;
  }
}

TEST(Quadrotor, HoverEnergyConserved) {
  const QuadrotorParams params;
  QuadrotorState s;
  s.position = {0.0, 0.0, 1.0};
  const auto energy = [&](const QuadrotorState& q) {
    return 0.5 * params.mass * q.velocity.squaredNorm() + params.mass * params.gravity * q.position.z();
  };
  for (int i = 0; i < 100; ++i) {
    const QuadrotorState next =
        quadrotor_step(s, {params.hover_thrust(), 0.0, 0.0, 0.0}, Eigen::Vector3d::Zero(), 0.04, params);
    EXPECT_LE(std::abs(energy(next) - energy(s)), 1e-10);
    s = next;
  }
}

TEST(Quadrotor, FreeFall) {
  const QuadrotorParams params;
  QuadrotorState s;
  s.position = {0.0, 0.0, 1.0};
  const QuadrotorState next = quadrotor_step(s, {0.0, 0.0, 0.0, 0.0}, Eigen::Vector3d::Zero(), 0.04, params);
  EXPECT_NEAR(next.velocity.z(), -params.gravity * 0.04, 1e-14);
  EXPECT_EQ(next.velocity.x(), 0.0);
  EXPECT_EQ(next.velocity.y(), 0.0);
}

TEST(Quadrotor, WindAcceleration) {
  const QuadrotorParams params;
  QuadrotorState s;
  s.position = {0.0, 0.0, 1.0};
  const QuadrotorState next =
      quadrotor_step(s, {params.hover_thrust(), 0.0, 0.0, 0.0}, Eigen::Vector3d(0.01, 0.0, 0.0), 0.04, params);
  const double accel = next.velocity.x() / 0.04;
  EXPECT_NEAR(accel, 0.01 / 0.027, 1e-12);
  EXPECT_NEAR(accel, 0.370, 1e-3);
}

TEST(Quadrotor, AttitudeFirstOrderResponse) {
  const QuadrotorParams params;
  QuadrotorState s;
  s.position = {0.0, 0.0, 1.0};
  const double target = 0.1;
  double elapsed = 0.0;
  while (elapsed < 0.15 - 1e-12) {
    s = quadrotor_step(s, {params.hover_thrust(), target, 0.0, 0.0}, Eigen::Vector3d::Zero(), 0.01, params);
    elapsed += 0.01;
  }
  // Euler discretization of a 0.15 s lag: 1 - (1 - 0.01/0.15)^15.
  const double expected = target * (1.0 - std::pow(1.0 - 0.01 / 0.15, 15));
  EXPECT_NEAR(s.attitude.x(), expected, 1e-12);
  EXPECT_NEAR(s.attitude.x() / target, 1.0 - std::exp(-1.0), 0.02);
}

TEST(Quadrotor, SubstepsUsed) {
  const QuadrotorParams params;
  QuadrotorState s;
  s.position = {0.0, 0.0, 1.0};
  const Eigen::Vector4d command(params.hover_thrust(), 0.2, 0.0, 0.0);
  const QuadrotorState coarse = quadrotor_step(s, command, Eigen::Vector3d::Zero(), 0.04, params);
  QuadrotorState fine = s;
  for (int i = 0; i < 4; ++i) fine = quadrotor_step(fine, command, Eigen::Vector3d::Zero(), 0.01, params);
  EXPECT_EQ(coarse.attitude, fine.attitude);
  EXPECT_EQ(coarse.position, fine.position);
  EXPECT_EQ(coarse.velocity, fine.velocity);
}

TEST(Quadrotor, RotationMatchesZyx) {
  const Eigen::Vector3d att(0.1, -0.2, 0.3);
  const Eigen::Matrix3d R = rotation_from_euler(att);
  const double cr = std::cos(0.1), sr = std::sin(0.1), cp = std::cos(-0.2), sp = std::sin(-0.2), cy = std::cos(0.3),
               sy = std::sin(0.3);
  // Third column is the body z-axis in world coordinates.
  EXPECT_NEAR(R(0, 2), cy * sp * cr + sy * sr, 1e-15);
  EXPECT_NEAR(R(1, 2), sy * sp * cr - cy * sr, 1e-15);
  EXPECT_NEAR(R(2, 2), cp * cr, 1e-15);
}

TEST(Quadrotor, RejectsNonPositiveDt) {
  EXPECT_THROW((void)quadrotor_step({}, Eigen::Vector4d::Zero(), Eigen::Vector3d::Zero(), 0.0), std::exception);
}

TEST(Lti, DoubleIntegratorDrift) {
  const LtiSystem sys = LtiSystem::double_integrator(0.1);
  Eigen::VectorXd x(2);
  x << 1.0, 2.0;
  const Eigen::VectorXd u = Eigen::VectorXd::Zero(1);
  for (int k = 1; k <= 10; ++k) {
    x = sys.step(x, u);
    EXPECT_NEAR(x(0), 1.0 + 0.2 * k, 1e-12);
    EXPECT_EQ(x(1), 2.0);
  }
}

TEST(Lti, ZeroStaysZero) {
  const LtiSystem sys = LtiSystem::double_integrator(0.1);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(2);
  for (int k = 0; k < 100; ++k) x = sys.step(x, Eigen::VectorXd::Zero(1));
  EXPECT_EQ(x, Eigen::VectorXd::Zero(2));
}

TEST(Lti, ImpulseResponseMarkovParameters) {
  LtiSystem sys;
  sys.A.resize(2, 2);
  sys.A << 0.9, 0.2, -0.1, 0.7;
  sys.B.resize(2, 1);
  sys.B << 0.5, 1.0;
  sys.C.resize(1, 2);
  sys.C << 1.0, -0.5;
  // Hand-computed: CB = 0, AB = (0.65, 0.65), CAB = 0.325, A^2B = (0.715, 0.39), CA^2B = 0.52.
  const double markov[] = {0.0, 0.325, 0.52};
  Eigen::VectorXd x = Eigen::VectorXd::Zero(2);
  Eigen::VectorXd u(1);
  for (int k = 0; k < 3; ++k) {
    u(0) = k == 0 ? 1.0 : 0.0;
    x = sys.step(x, u);
    EXPECT_NEAR(sys.output(x)(0), markov[k], 1e-14);
  }
}

TEST(Lti, Superposition) {
  const LtiSystem sys = LtiSystem::double_integrator(0.05);
  std::mt19937_64 rng(11);
  std::normal_distribution<double> dist;
  Eigen::VectorXd x1 = Eigen::VectorXd::Zero(2), x2 = x1, x12 = x1;
  for (int k = 0; k < 100; ++k) {
    Eigen::VectorXd u1(1), u2(1);
    u1 << dist(rng);
    u2 << dist(rng);
    x1 = sys.step(x1, u1);
    x2 = sys.step(x2, u2);
    x12 = sys.step(x12, u1 + u2);
    EXPECT_LE(std::abs(sys.output(x12)(0) - sys.output(x1)(0) - sys.output(x2)(0)), 1e-12);
  }
}

TEST(Noise, ZeroStdIsIdentity) {
  std::mt19937_64 rng(1);
  const Eigen::VectorXd y = Eigen::Vector4d(1.0, -2.0, 3.0, 0.5);
  EXPECT_EQ(add_measurement_noise(y, Eigen::VectorXd::Zero(4), rng), y);
}

TEST(Noise, EmpiricalStd) {
  std::mt19937_64 rng(2024);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(1);
  const Eigen::VectorXd std = Eigen::VectorXd::Constant(1, 0.05);
  constexpr int n = 100000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = add_measurement_noise(zero, std, rng)(0);
    sum += v;
    sum_sq += v * v;
  }
  const double mean = sum / n;
  EXPECT_NEAR(std::sqrt(sum_sq / n - mean * mean), 0.05, 0.002);
}

TEST(Noise, SameSeedSameSequence) {
  std::mt19937_64 a(9), b(9);
  const Eigen::VectorXd y = Eigen::Vector4d::Zero();
  const Eigen::VectorXd stds = NoiseConfig{}.vehicle_output_stds();
  for (int i = 0; i < 100; ++i) EXPECT_EQ(add_measurement_noise(y, stds, a), add_measurement_noise(y, stds, b));
}

TEST(Noise, DimensionMismatch) {
  std::mt19937_64 rng(1);
  EXPECT_THROW((void)add_measurement_noise(Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(2), rng), std::exception);
}

TEST(Noise, VehicleStdsInRadians) {
  const Eigen::Vector4d s = NoiseConfig{}.vehicle_output_stds();
  EXPECT_DOUBLE_EQ(s(0), 0.05);
  EXPECT_DOUBLE_EQ(s(2), 0.05);
  EXPECT_NEAR(s(3), 0.6 * std::numbers::pi / 180.0, 1e-15);
}

TEST(Plants, BitwiseReproducible) {
  const auto run = [] {
    std::mt19937_64 rng(77);
    QuadrotorState q;
    q.position = {0.0, 0.0, 1.0};
    VehicleState v{};
    for (int i = 0; i < 200; ++i) {
      q = quadrotor_step(q, {0.27, 0.05, -0.03, 0.1}, sample_wind(0.01, rng), 0.04);
      v = vehicle_step(v, {1.0, 0.2}, 0.05);
    }
    return std::pair{q.position, vehicle_output(v)};
  };
  const auto a = run();
  const auto b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

}  // namespace
}  // namespace deepc
