#include "casnav/dynamics.hpp"

#include <cmath>
#include <string>

#include "casnav/error.hpp"
#include "casnav/integrate.hpp"

namespace casnav {
namespace {

struct Kinematics {
  Matrix3 R;
  Vector3 p;
  Vector3 v;
};

Kinematics operator+(const Kinematics& a, const Kinematics& b) {
  return {a.R + b.R, a.p + b.p, a.v + b.v};
}

Kinematics operator*(double s, const Kinematics& a) { return {s * a.R, s * a.p, s * a.v}; }

Kinematics rate(const Kinematics& x, const ImuSample& imu, const Vector3& gravity) {
  return {x.R * skew(imu.omega), x.R * x.v,
          -imu.omega.cross(x.v) + x.R.transpose() * gravity + imu.accel};
}

void check_step(const RigidBodyState& state, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    throw Error(ErrorCode::InvalidArgument, "step_truth: dt must be positive and finite, got " +
                                                std::to_string(dt));
  }
  if (!state.R.allFinite() || !state.p.allFinite() || !state.v.allFinite() ||
      !std::isfinite(state.t)) {
    throw Error(ErrorCode::NonFinite, "step_truth: non-finite state");
  }
}

void check_imu(const ImuSample& imu) {
  if (!imu.omega.allFinite() || !imu.accel.allFinite()) {
    throw Error(ErrorCode::NonFinite, "step_truth: non-finite IMU sample");
  }
}

}  // namespace

TrajectorySpec figure_eight_trajectory() {
  TrajectorySpec spec;
  spec.name = "figure_eight";
  spec.position = [](double t) {
    return Vector3(2.0 * std::sin(t), 2.0 * std::sin(t) * std::cos(t), 2.0);
  };
  // sin t cos t = sin(2t) / 2
  spec.velocity = [](double t) { return Vector3(2.0 * std::cos(t), 2.0 * std::cos(2.0 * t), 0.0); };
  spec.acceleration = [](double t) {
    return Vector3(-2.0 * std::sin(t), -4.0 * std::sin(2.0 * t), 0.0);
  };
  spec.angular_velocity = [](double t) {
    return Vector3(-std::cos(2.0 * t), 1.0, std::sin(2.0 * t));
  };
  return spec;
}

TrajectorySpec straight_line_trajectory(const Vector3& origin, const Vector3& velocity,
                                        const Vector3& gravity) {
  TrajectorySpec spec;
  spec.name = "line";
  spec.position = [origin, velocity](double t) -> Vector3 { return origin + t * velocity; };
  spec.velocity = [velocity](double) -> Vector3 { return velocity; };
  spec.acceleration = [](double) -> Vector3 { return Vector3::Zero(); };
  spec.angular_velocity = [](double) -> Vector3 { return Vector3::Zero(); };
  spec.gravity = gravity;
  return spec;
}

RigidBodyState initial_state(const TrajectorySpec& spec) {
  RigidBodyState s;
  s.t = 0.0;
  s.R = spec.initial_attitude;
  s.p = spec.position(0.0);
  s.v = spec.initial_attitude.transpose() * spec.velocity(0.0);
  return s;
}

ImuSample synthesize_imu(const TrajectorySpec& spec, const RigidBodyState& state) {
  return {state.t, spec.angular_velocity(state.t),
          state.R.transpose() * (spec.acceleration(state.t) - spec.gravity)};
}

RigidBodyState step_truth(const RigidBodyState& state, const ImuModel& imu,
                          const Vector3& gravity, double dt) {
  check_step(state, dt);
  const Kinematics x0{state.R, state.p, state.v};
  const Kinematics x1 = rk4_step(x0, dt, [&](int stage, const Kinematics& x) {
    RigidBodyState s{state.t + kRk4Nodes[stage] * dt, x.R, x.p, x.v};
    const ImuSample sample = imu(s);
    check_imu(sample);
    return rate(x, sample, gravity);
  });
  return {state.t + dt, orthonormalize(x1.R), x1.p, x1.v};
}

RigidBodyState step_truth(const RigidBodyState& state, const ImuSample& imu,
                          const Vector3& gravity, double dt) {
  check_imu(imu);
  return step_truth(state, ImuModel([&imu](const RigidBodyState&) { return imu; }), gravity, dt);
}

std::vector<RigidBodyState> simulate_truth(const TrajectorySpec& spec, double dt,
                                           std::size_t steps) {
  std::vector<RigidBodyState> out;
  out.reserve(steps + 1);
  out.push_back(initial_state(spec));
  const ImuModel imu = [&spec](const RigidBodyState& s) { return synthesize_imu(spec, s); };
  for (std::size_t k = 0; k < steps; ++k) {
    RigidBodyState next = step_truth(out.back(), imu, spec.gravity, dt);
    next.t = static_cast<double>(k + 1) * dt;
    out.push_back(next);
  }
  return out;
}

}  // namespace casnav
