#pragma once

#include <functional>
#include <string>
#include <vector>

#include "casnav/geometry.hpp"

namespace casnav {

/// Ground-truth rigid body: attitude R (body to inertial), inertial position
/// p, body-frame velocity v.
struct RigidBodyState {
  double t = 0.0;
  Matrix3 R = Matrix3::Identity();
  Vector3 p = Vector3::Zero();
  Vector3 v = Vector3::Zero();
};

struct ImuSample {
  double t = 0.0;
  Vector3 omega = Vector3::Zero();
  Vector3 accel = Vector3::Zero();  // apparent (non-gravitational) acceleration, body frame
};

/// Analytic reference motion: inertial position and its first two
/// derivatives, plus the body angular velocity signal. R(t) is not given in
/// closed form; it is defined by integrating R' = R skew(omega) from
/// initial_attitude.
struct TrajectorySpec {
  std::string name;
  std::function<Vector3(double)> position;
  std::function<Vector3(double)> velocity;
  std::function<Vector3(double)> acceleration;
  std::function<Vector3(double)> angular_velocity;
  Vector3 gravity{0.0, 0.0, -9.81};
  Matrix3 initial_attitude = Matrix3::Identity();
};

/// p(t) = 2[sin t, sin t cos t, 1], omega(t) = [-cos 2t, 1, sin 2t].
TrajectorySpec figure_eight_trajectory();

/// Constant-velocity line p(t) = origin + t * velocity with zero rotation.
TrajectorySpec straight_line_trajectory(const Vector3& origin, const Vector3& velocity,
                                        const Vector3& gravity = Vector3(0.0, 0.0, -9.81));

/// State at t = 0 consistent with the spec (v = R0^T pdot(0)).
RigidBodyState initial_state(const TrajectorySpec& spec);

/// IMU reading along the spec: accel = R^T (pddot(t) - g) using the
/// attitude carried by `state`, omega = spec.angular_velocity(t).
ImuSample synthesize_imu(const TrajectorySpec& spec, const RigidBodyState& state);

/// IMU as a function of the (stage) state being integrated.
using ImuModel = std::function<ImuSample(const RigidBodyState&)>;

/// One RK4 step of R' = R skew(omega), p' = R v, v' = -omega x v + R^T g + a,
/// with the IMU re-evaluated at every stage. R is re-orthonormalized once at
/// the end of the step.
RigidBodyState step_truth(const RigidBodyState& state, const ImuModel& imu,
                          const Vector3& gravity, double dt);

/// Same with an IMU sample held constant across the step.
RigidBodyState step_truth(const RigidBodyState& state, const ImuSample& imu,
                          const Vector3& gravity, double dt);

/// Integrates the spec from initial_state() and returns states at
/// t = 0, dt, ..., steps * dt.
std::vector<RigidBodyState> simulate_truth(const TrajectorySpec& spec, double dt,
                                           std::size_t steps);

}  // namespace casnav
