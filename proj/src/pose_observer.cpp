#include "casnav/pose_observer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <Eigen/Eigenvalues>

#include "casnav/error.hpp"
#include "casnav/integrate.hpp"

namespace casnav {
namespace {

void compute_anchor_matrices(AnchorSet& a) {
  a.center.setZero();
  for (std::size_t i = 0; i < a.size(); ++i) {
    a.center += a.weights[i] * a.anchors[i];
  }
  a.offsets.resize(a.size());
  a.M.setZero();
  for (std::size_t i = 0; i < a.size(); ++i) {
    a.offsets[i] = a.anchors[i] - a.center;
    a.M += a.weights[i] * a.offsets[i] * a.offsets[i].transpose();
  }
  a.Mbar = 0.5 * (a.M.trace() * Matrix3::Identity() - a.M);
  const Eigen::SelfAdjointEigenSolver<Matrix3> es(a.M);
  a.m_eigenvalues = es.eigenvalues();
  a.m_eigenvectors = es.eigenvectors();
  if (a.m_eigenvectors.determinant() < 0.0) {
    a.m_eigenvectors.col(2) *= -1.0;
  }
  // Mbar shares M's eigenvectors; its eigenvalues are (tr M - lambda_i) / 2.
  a.mbar_eigenvalues = Eigen::SelfAdjointEigenSolver<Matrix3>(a.Mbar).eigenvalues();
}

double spectral_gap(const Vector3& ascending) {
  return std::min(ascending(1) - ascending(0), ascending(2) - ascending(1));
}

struct PoseState {
  Matrix3 R;
  Vector3 p;
};

PoseState operator+(const PoseState& a, const PoseState& b) { return {a.R + b.R, a.p + b.p}; }
PoseState operator*(double s, const PoseState& a) { return {s * a.R, s * a.p}; }

}  // namespace

void PoseGains::validate() const {
  if (!(k_R > 0.0) || !(k_p > 0.0) || !std::isfinite(k_R) || !std::isfinite(k_p)) {
    throw Error(ErrorCode::InvalidArgument, "pose gains must be positive and finite");
  }
}

AnchorSet build_anchors(std::span<const Vector3> landmarks, std::span<const double> weights,
                        const AnchorOptions& options) {
  if (landmarks.size() < 3) {
    throw Error(ErrorCode::DegenerateAnchors, "build_anchors: need at least 3 known landmarks");
  }
  if (weights.size() != landmarks.size()) {
    throw Error(ErrorCode::DimensionMismatch, "build_anchors: one weight per landmark required");
  }
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  for (double w : weights) {
    if (!(w > 0.0 && w < 1.0)) {
      throw Error(ErrorCode::InvalidArgument, "build_anchors: weights must lie in (0, 1)");
    }
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw Error(ErrorCode::InvalidArgument, "build_anchors: weights must sum to 1");
  }

  AnchorSet a;
  a.anchors.assign(landmarks.begin(), landmarks.end());
  a.weights.assign(weights.begin(), weights.end());
  compute_anchor_matrices(a);

  const double scale = std::max(1.0, a.M.trace());
  if (!(a.mbar_eigenvalues(0) > 1e-9 * scale)) {
    throw Error(ErrorCode::DegenerateAnchors,
                "build_anchors: known landmarks are aligned (Mbar is not positive definite)");
  }

  while (spectral_gap(a.mbar_eigenvalues) < options.eig_gap_tol) {
    if (!options.tune_weights || a.tuning_steps >= options.max_attempts) {
      if (options.require_distinct) {
        throw Error(ErrorCode::RepeatedEigenvalues,
                    "build_anchors: Mbar eigenvalues are not distinct (gap " +
                        std::to_string(spectral_gap(a.mbar_eigenvalues)) + ")");
      }
      break;
    }
    a.weights[0] *= 1.0 + options.perturbation;
    a.weights[1] *= 1.0 - options.perturbation;
    const double sum = std::accumulate(a.weights.begin(), a.weights.end(), 0.0);
    for (double& w : a.weights) {
      w /= sum;
    }
    ++a.tuning_steps;
    compute_anchor_matrices(a);
  }
  return a;
}

AnchorSet build_anchors(const LandmarkMap& map, const AnchorOptions& options) {
  const std::size_t m = map.known_count;
  if (m < 3 || m > map.size()) {
    throw Error(ErrorCode::DegenerateAnchors, "build_anchors: map needs 3 <= M <= N known landmarks");
  }
  const std::vector<double> weights(m, 1.0 / static_cast<double>(m));
  return build_anchors(std::span<const Vector3>(map.positions.data(), m), weights, options);
}

Innovations innovations(const AnchorSet& anchors, const PoseEstimate& pose,
                        std::span<const Vector3> bp_hat) {
  if (bp_hat.size() < anchors.size()) {
    throw Error(ErrorCode::DimensionMismatch, "innovations: fewer landmark estimates than anchors");
  }
  Innovations out;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const Vector3 xi = anchors.anchors[i] - pose.p - pose.R * bp_hat[i];
    out.sigma_R += anchors.weights[i] * anchors.offsets[i].cross(xi);
    out.sigma_p += anchors.weights[i] * xi;
  }
  out.sigma_R *= 0.5;
  return out;
}

PoseStageInputs pose_inputs(const LtvStages& stages, const std::array<Vector3, 4>& omega,
                            std::size_t landmarks, std::size_t known) {
  PoseStageInputs inputs;
  for (std::size_t s = 0; s < 4; ++s) {
    const Vector& x = stages[s];
    if (static_cast<std::size_t>(x.size()) != 3 * landmarks + 6 || known > landmarks) {
      throw Error(ErrorCode::DimensionMismatch, "pose_inputs: stage estimate has wrong dimension");
    }
    inputs[s].omega = omega[s];
    inputs[s].vhat = x.segment<3>(static_cast<Eigen::Index>(3 * landmarks));
    inputs[s].bp_hat.resize(known);
    for (std::size_t i = 0; i < known; ++i) {
      inputs[s].bp_hat[i] = x.segment<3>(static_cast<Eigen::Index>(3 * i));
    }
  }
  return inputs;
}

PoseRate pose_rate(const PoseEstimate& pose, const PoseStageInput& input, const PoseGains& gains,
                   const AnchorSet& anchors) {
  const Innovations inn = innovations(anchors, pose, input.bp_hat);
  const Vector3 body_rate = input.omega + gains.k_R * pose.R.transpose() * inn.sigma_R;
  return {pose.R * skew(body_rate),
          pose.R * input.vhat + (gains.k_R * inn.sigma_R).cross(pose.p - anchors.center) +
              gains.k_p * inn.sigma_p};
}

PoseEstimate pose_step(const PoseEstimate& pose, const PoseStageInputs& inputs,
                       const PoseGains& gains, const AnchorSet& anchors, double dt) {
  if (!(dt > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "pose_step: dt must be positive");
  }
  for (const auto& in : inputs) {
    if (!in.omega.allFinite() || !in.vhat.allFinite()) {
      throw Error(ErrorCode::NonFinite, "pose_step: non-finite input");
    }
  }
  if (!pose.R.allFinite() || !pose.p.allFinite()) {
    throw Error(ErrorCode::NonFinite, "pose_step: non-finite pose");
  }
  const PoseState next = rk4_step(PoseState{pose.R, pose.p}, dt, [&](int stage, const PoseState& s) {
    const PoseRate r = pose_rate({s.R, s.p}, inputs[static_cast<std::size_t>(stage)], gains, anchors);
    return PoseState{r.R, r.p};
  });
  if (!next.R.allFinite() || !next.p.allFinite()) {
    throw Error(ErrorCode::NonFinite, "pose_step: integration produced non-finite values");
  }
  return {orthonormalize(next.R), next.p};
}

PoseEstimate pose_step(const PoseEstimate& pose, const PoseStageInput& input,
                       const PoseGains& gains, const AnchorSet& anchors, double dt) {
  return pose_step(pose, PoseStageInputs{input, input, input, input}, gains, anchors, dt);
}

PoseError pose_error(const Matrix3& R, const Vector3& p, const PoseEstimate& pose,
                     const AnchorSet& anchors) {
  PoseError e;
  e.R = R * pose.R.transpose();
  e.p = p - e.R * pose.p - (Matrix3::Identity() - e.R) * anchors.center;
  return e;
}

std::vector<Vector3> reconstruct_landmarks(const PoseEstimate& pose, std::span<const Vector3> bp_hat) {
  std::vector<Vector3> out;
  out.reserve(bp_hat.size());
  for (const auto& b : bp_hat) {
    out.push_back(pose.R * b + pose.p);
  }
  return out;
}

double ultimate_bound_monitor(const PoseError& err) {
  const double d = attitude_distance(err.R);
  return d * d + err.p.squaredNorm();
}

}  // namespace casnav
