#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "casnav/dynamics.hpp"
#include "casnav/geometry.hpp"
#include "casnav/ltv_observer.hpp"
#include "casnav/sensors.hpp"

namespace casnav {

struct PoseEstimate {
  Matrix3 R = Matrix3::Identity();
  Vector3 p = Vector3::Zero();
};

struct PoseGains {
  double k_R = 40.0;
  double k_p = 100.0;

  void validate() const;
};

struct AnchorOptions {
  /// Perturb weights until Mbar has distinct eigenvalues.
  bool tune_weights = true;
  /// Fail with RepeatedEigenvalues when the spectrum stays degenerate.
  bool require_distinct = true;
  double eig_gap_tol = 1e-6;
  int max_attempts = 100;
  /// Relative weight perturbation applied to the first two anchors per attempt.
  double perturbation = 0.05;
};

/// Known landmarks, their weights and the derived matrices
///   p_o = sum rho_i p_i,  nu_i = p_i - p_o,  M = sum rho_i nu_i nu_i^T,
///   Mbar = (tr(M) I - M) / 2.
struct AnchorSet {
  std::vector<Vector3> anchors;
  std::vector<double> weights;
  Vector3 center = Vector3::Zero();
  std::vector<Vector3> offsets;
  Matrix3 M = Matrix3::Zero();
  Matrix3 Mbar = Matrix3::Zero();
  Vector3 mbar_eigenvalues = Vector3::Zero();  // ascending
  Matrix3 m_eigenvectors = Matrix3::Identity();  // columns, eigenvectors of M (ascending), det +1
  Vector3 m_eigenvalues = Vector3::Zero();
  int tuning_steps = 0;

  std::size_t size() const { return anchors.size(); }
};

/// Weights must be positive and sum to one. Throws DegenerateAnchors for
/// aligned anchors, RepeatedEigenvalues when Mbar's spectrum stays degenerate
/// (and distinct eigenvalues are required).
AnchorSet build_anchors(std::span<const Vector3> landmarks, std::span<const double> weights,
                        const AnchorOptions& options = {});

/// Uniform weights over the map's known landmarks.
AnchorSet build_anchors(const LandmarkMap& map, const AnchorOptions& options = {});

struct Innovations {
  Vector3 sigma_R = Vector3::Zero();
  Vector3 sigma_p = Vector3::Zero();
};

/// xi_i = p_i - p_hat - R_hat bp_hat_i, sigma_R = 1/2 sum rho_i nu_i x xi_i,
/// sigma_p = sum rho_i xi_i. Only the first anchors.size() estimates are used.
Innovations innovations(const AnchorSet& anchors, const PoseEstimate& pose,
                        std::span<const Vector3> bp_hat);

/// What the pose observer reads at one RK4 stage.
struct PoseStageInput {
  Vector3 omega = Vector3::Zero();
  Vector3 vhat = Vector3::Zero();
  std::vector<Vector3> bp_hat;  // at least the known landmarks
};

using PoseStageInputs = std::array<PoseStageInput, 4>;

/// Slices the LTV stage estimates into pose-observer inputs.
PoseStageInputs pose_inputs(const LtvStages& stages, const std::array<Vector3, 4>& omega,
                            std::size_t landmarks, std::size_t known);

struct PoseRate {
  Matrix3 R;
  Vector3 p;
};

/// R_hat' = R_hat skew(omega + k_R R_hat^T sigma_R),
/// p_hat' = R_hat v_hat + skew(k_R sigma_R)(p_hat - p_o) + k_p sigma_p.
PoseRate pose_rate(const PoseEstimate& pose, const PoseStageInput& input, const PoseGains& gains,
                   const AnchorSet& anchors);

/// One RK4 step; innovations are re-evaluated at every stage. R_hat is
/// re-orthonormalized at the end of the step.
PoseEstimate pose_step(const PoseEstimate& pose, const PoseStageInputs& inputs,
                       const PoseGains& gains, const AnchorSet& anchors, double dt);

/// Inputs held constant over the step.
PoseEstimate pose_step(const PoseEstimate& pose, const PoseStageInput& input,
                       const PoseGains& gains, const AnchorSet& anchors, double dt);

struct PoseError {
  Matrix3 R = Matrix3::Identity();  // R R_hat^T
  Vector3 p = Vector3::Zero();      // p - R~ p_hat - (I - R~) p_o
};

PoseError pose_error(const Matrix3& R, const Vector3& p, const PoseEstimate& pose,
                     const AnchorSet& anchors);

/// p_hat_i = R_hat bp_hat_i + p_hat for every landmark.
std::vector<Vector3> reconstruct_landmarks(const PoseEstimate& pose, std::span<const Vector3> bp_hat);

/// W = |R~|_I^2 + |p~|^2.
double ultimate_bound_monitor(const PoseError& err);

}  // namespace casnav
