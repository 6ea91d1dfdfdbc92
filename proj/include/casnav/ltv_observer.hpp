#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "casnav/dynamics.hpp"
#include "casnav/geometry.hpp"
#include "casnav/sensors.hpp"

namespace casnav {

/// x = [B p_1; ...; B p_N; v; eta], eta = R^T g. Dimension 3N + 6.
struct ExtendedState {
  std::size_t landmarks = 0;
  Vector x;

  ExtendedState() = default;
  explicit ExtendedState(std::size_t n) : landmarks(n), x(Vector::Zero(3 * n + 6)) {}
  ExtendedState(std::size_t n, Vector values);

  std::size_t dim() const { return 3 * landmarks + 6; }
  auto landmark(std::size_t i) { return x.segment<3>(3 * i); }
  auto landmark(std::size_t i) const { return x.segment<3>(3 * i); }
  auto velocity() { return x.segment<3>(3 * landmarks); }
  auto velocity() const { return x.segment<3>(3 * landmarks); }
  auto gravity() { return x.segment<3>(3 * landmarks + 3); }
  auto gravity() const { return x.segment<3>(3 * landmarks + 3); }

  /// The state the observer is trying to recover, taken from ground truth.
  static ExtendedState from_truth(const RigidBodyState& truth, const LandmarkMap& map,
                                  const Vector3& g);
};

/// Dense (A, B, C) of the LTV system x' = A x + B a, y = C x.
struct LtvMatrices {
  Matrix A;
  Matrix B;
  Matrix C;
};

LtvMatrices build_system(const Vector3& omega, std::span<const Matrix3> projectors);

/// Projectors are recomputed from the camera-frame bearings and the rig.
LtvMatrices build_system(const Vector3& omega, const BearingSample& bearings,
                         const CameraRig& rig);

/// Q (3N x 3N), V and P0 ((3N+6) x (3N+6)); all symmetric positive definite.
class RiccatiConfig {
 public:
  RiccatiConfig(Matrix Q, Matrix V, Matrix P0);

  /// Q = q I, V = v I, P0 = p0 I.
  static RiccatiConfig isotropic(std::size_t landmarks, double q, double v, double p0);

  const Matrix& Q() const { return q_; }
  const Matrix& V() const { return v_; }
  const Matrix& P0() const { return p0_; }
  std::size_t landmarks() const { return landmarks_; }

  /// Upper Cholesky factor U of Q (Q = U^T U); Gram products use it.
  const Matrix& q_factor() const { return q_factor_; }
  bool q_is_diagonal() const { return q_diagonal_; }

 private:
  std::size_t landmarks_;
  Matrix q_, v_, p0_, q_factor_;
  bool q_diagonal_;
};

struct RiccatiState {
  Matrix P;
  Matrix K;
};

/// Observer gain K = P C^T Q.
Matrix riccati_gain(const Matrix& P, std::span<const Matrix3> projectors, const RiccatiConfig& cfg);

/// A X using the block structure of A (no dense A is formed).
Matrix apply_system(const Vector3& omega, const Matrix& X, std::size_t landmarks);

/// P' = A P + P A^T - P C^T Q C P + V, structured evaluation.
Matrix riccati_rate(const Matrix& P, const Vector3& omega, std::span<const Matrix3> projectors,
                    const RiccatiConfig& cfg);

/// Same right-hand side from dense matrices; reference path for tests.
Matrix riccati_rate(const Matrix& P, const LtvMatrices& m, const RiccatiConfig& cfg);

/// One RK4 step of the Riccati equation with (A, C) held constant over the
/// step. P is symmetrized and K recomputed afterwards. With check_positivity,
/// throws LostPositivity when the updated P has no Cholesky factor.
RiccatiState riccati_step(const RiccatiState& rs, const LtvMatrices& m, const RiccatiConfig& cfg,
                          double dt, bool check_positivity = true);

/// x' = A x + B a + K (y - C x), stacked form with dense matrices.
Vector observer_rate_stacked(const Vector& xhat, const Matrix& K, const LtvMatrices& m,
                             const Vector3& accel, const Vector& y);

/// The same right-hand side written per component (landmark, velocity, gravity rows).
Vector observer_rate_componentwise(const Vector& xhat, const Matrix& K, const Vector3& omega,
                                   const Vector3& accel, std::span<const Matrix3> projectors,
                                   std::span<const Vector3> outputs);

/// Everything the LTV observer consumes at one time instant.
struct LtvMeasurement {
  double t = 0.0;
  Vector3 omega = Vector3::Zero();
  Vector3 accel = Vector3::Zero();
  std::vector<Matrix3> projectors;
  std::vector<Vector3> outputs;
};

LtvMeasurement make_measurement(const ImuSample& imu, const BearingSample& bearings);

/// Explicit step with the gain and measurements frozen at the start of the step.
ExtendedState observer_step(const ExtendedState& xhat, const RiccatiState& rs,
                            const ImuSample& imu, const BearingSample& bearings, double dt);

/// x~^T P^-1 x~. Throws SingularMatrix when P is not positive definite.
double lyapunov_value(const Vector& xtilde, const Matrix& P);

struct SpectrumBounds {
  double min = 0.0;
  double max = 0.0;
};

SpectrumBounds spectrum_bounds(const Matrix& P);

/// Estimates at the four RK4 stages of a step; the pose observer consumes
/// these so the cascade integrates as one coupled system.
using LtvStages = std::array<Vector, 4>;

/// Riccati observer owning (x_hat, P). Each step integrates the estimate and
/// the Riccati equation together with RK4, using the measurements sampled at
/// the start, midpoint and end of the step.
class LtvObserver {
 public:
  LtvObserver(RiccatiConfig cfg, ExtendedState xhat0, std::size_t check_every = 100);

  LtvStages step(const LtvMeasurement& start, const LtvMeasurement& mid, const LtvMeasurement& end,
                 double dt);

  const ExtendedState& estimate() const { return xhat_; }
  const RiccatiState& riccati() const { return rs_; }
  const RiccatiConfig& config() const { return cfg_; }
  double time() const { return t_; }
  std::size_t steps() const { return steps_; }

 private:
  RiccatiConfig cfg_;
  ExtendedState xhat_;
  RiccatiState rs_;
  std::size_t check_every_;
  std::size_t steps_ = 0;
  double t_ = 0.0;
};

}  // namespace casnav
