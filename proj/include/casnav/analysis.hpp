#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "casnav/dynamics.hpp"
#include "casnav/geometry.hpp"
#include "casnav/pose_observer.hpp"
#include "casnav/sensors.hpp"

namespace casnav {

/// Uniformly sampled signals of the LTV pair (A(t), C(t)) along a true
/// trajectory, plus the attitude and inertial bearings the factored Gramian
/// and the PE check need.
struct LtvTrace {
  double t0 = 0.0;
  double dt = 0.0;
  std::size_t landmarks = 0;
  std::vector<Vector3> omega;
  std::vector<Matrix3> attitude;
  std::vector<std::vector<Matrix3>> projectors;           // Pi_{z_i}, body frame
  std::vector<std::vector<UnitVector3>> inertial_bearings;  // z'_i = R R_c z_i

  std::size_t size() const { return omega.size(); }
  double time(std::size_t k) const { return t0 + static_cast<double>(k) * dt; }
};

/// Simulates the truth at sim_dt for `horizon` seconds and keeps every
/// stride-th sample (trace spacing sim_dt * stride).
LtvTrace record_trace(const TrajectorySpec& spec, const CameraRig& rig, const LandmarkMap& map,
                      double sim_dt, double horizon, std::size_t stride);

struct PeWindow {
  double start = 0.0;
  double min_eig = 0.0;
};

struct PeLandmarkReport {
  std::size_t landmark = 0;
  double worst_min_eig = 0.0;
  bool pass = false;
  std::vector<PeWindow> windows;
};

struct PeReport {
  double window = 0.0;
  double mu_o = 0.0;
  std::vector<PeLandmarkReport> landmarks;

  bool all_pass() const;
};

/// Trapezoidal integral of pi(z'_i) over sliding windows [t, t + window],
/// with t on a grid of spacing window_step. `bearings[k][i]` is z'_i at
/// sample k (spacing dt). Throws WindowTooShort when the window spans fewer
/// than two samples or does not fit in the trace.
PeReport pe_check(const std::vector<std::vector<UnitVector3>>& bearings, double dt, double window,
                  double mu_o, double window_step = 0.1);

/// Phi(t_{i1}, t_{i0}) for Phi' = A Phi, integrated by RK4 with step 2h using
/// the uniformly spaced samples A[i0..i1] (spacing h) as stage values.
/// i1 - i0 must be even.
Matrix transition_matrix(std::span<const Matrix> A_samples, double h, std::size_t i0, std::size_t i1);

struct GramianEntry {
  double start = 0.0;
  double window = 0.0;
  std::string method;
  double min_eig = 0.0;
  double asymmetry = 0.0;  // max |W - W^T| / max |W| before symmetrization
  Matrix W;
};

/// W_o = (1/delta) int Phi^T(tau, t) C^T C Phi(tau, t) dtau, Phi integrated
/// numerically from the trace's angular velocity.
GramianEntry gramian_direct(const LtvTrace& trace, double start, double window);

/// Same integral over dense samples A[k], C[k] (spacing h) on the sample
/// range [i0, i0 + m], m even.
GramianEntry gramian_direct(std::span<const Matrix> A_samples, std::span<const Matrix> C_samples, double h,
                            std::size_t i0, std::size_t m);

/// Same Gramian through the rotation factorization
/// Phi(tau, t) = T(tau) exp(Abar (tau - t)) T^T(t) with T = blkdiag(R^T, ...).
GramianEntry gramian_factored(const LtvTrace& trace, double start, double window);

/// Abar: the constant coupling part of A (landmark <- velocity <- gravity).
Matrix nilpotent_coupling(std::size_t landmarks);

/// exp(Abar s) = I + Abar s + Abar^2 s^2 / 2 (Abar^3 = 0).
Matrix nilpotent_exp(const Matrix& abar, double s);

/// blkdiag(R, ..., R) with `blocks` copies.
Matrix block_rotation(const Matrix3& R, std::size_t blocks);

struct ExponentialFit {
  double rate = 0.0;            // lambda
  double prefactor = 0.0;       // smallest alpha with alpha e^{-lambda t} >= trace on the window
  double fit_prefactor = 0.0;   // least-squares intercept, exponentiated
  double residual = 0.0;        // RMS residual of the log-linear fit
  double t_start = 0.0;
  double t_end = 0.0;
  std::size_t samples = 0;

  double envelope(double t) const;
  bool dominates(std::span<const double> times, std::span<const double> values) const;
};

/// Least-squares line through log(value) on [t_start, t_end]. Throws
/// NonPositiveTrace on a non-positive sample in the window.
ExponentialFit fit_exponential(std::span<const double> times, std::span<const double> values,
                               double t_start, double t_end);

/// Input matrices of the pose error dynamics driven by the LTV error
/// x~ = x - x_hat (both 3 x (3N + 6)).
Matrix gamma_attitude(const AnchorSet& anchors, const PoseGains& gains, const Matrix3& Rhat,
                      std::size_t landmarks);
Matrix gamma_position(const AnchorSet& anchors, const PoseGains& gains, const Matrix3& R,
                      std::size_t landmarks);

/// Rotation-independent Frobenius norms of the two input matrices.
double gamma_attitude_norm(const AnchorSet& anchors, const PoseGains& gains);
double gamma_position_norm(const AnchorSet& anchors, const PoseGains& gains);

/// tr(M (I - R~)) + |p~|^2 / 2.
double zero_input_lyapunov(const AnchorSet& anchors, const PoseError& err);

struct ErrorSystemRate {
  Matrix3 R;
  Vector3 p;
};

/// R~' = R~ skew(-k_R psi(M R~) + G1 x~), p~' = -k_p p~ + G2 x~.
ErrorSystemRate pose_error_rate(const AnchorSet& anchors, const PoseGains& gains,
                                const PoseError& err, const Matrix3& R, const Vector& xtilde);

using ErrorDriver = std::function<Vector(double)>;

struct IssOptions {
  double horizon = 20.0;
  double dt = 1e-3;
};

struct IssOutcome {
  PoseError initial;
  PoseError terminal;
  double terminal_W = 0.0;
  double max_psi = 0.0;  // max |psi(M R~)| along the run
};

/// Integrates the pose error dynamics directly, driven by x~(t) = driver(t),
/// from each initial error. The body attitude R(t) entering the input
/// matrices follows `trajectory`.
std::vector<IssOutcome> iss_experiment(const AnchorSet& anchors, const PoseGains& gains,
                                       std::size_t landmarks, const ErrorDriver& driver,
                                       std::span<const PoseError> initial,
                                       const TrajectorySpec& trajectory, const IssOptions& options = {});

/// Rotation by pi about the eigen_index-th eigenvector of M (ascending order).
Matrix3 undesired_equilibrium(const AnchorSet& anchors, std::size_t eigen_index);

/// Zero-input error dynamics from R~ = exp(pi v) exp(perturbation), p~ = 0,
/// v the eigen_index-th eigenvector of M. Integrated in M's principal frame,
/// where the equilibrium is exactly representable; the dynamics are
/// equivariant under that change of basis so |psi(M R~)| and W are unchanged.
IssOutcome undesired_equilibrium_experiment(const AnchorSet& anchors, const PoseGains& gains,
                                            std::size_t eigen_index, const Vector3& perturbation,
                                            const IssOptions& options = {});

}  // namespace casnav
