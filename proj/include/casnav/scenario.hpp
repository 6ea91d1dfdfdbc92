#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "casnav/analysis.hpp"
#include "casnav/config.hpp"
#include "casnav/ltv_observer.hpp"
#include "casnav/pose_observer.hpp"

namespace casnav {

/// Errors of the cascade against ground truth at one instant.
struct CascadeErrors {
  double t = 0.0;
  double xtilde = 0.0;           // |x - x_hat|
  double velocity = 0.0;         // |v~|
  double landmark_max = 0.0;     // max_i |B p~_i|
  double eta = 0.0;              // |eta~|
  double gravity = 0.0;          // |R_hat eta_hat - g|
  double attitude = 0.0;         // |R~|_I
  double ptilde = 0.0;           // |p~|
  double position = 0.0;         // |p_hat - p|
  double mapped_unknown_max = 0.0;  // max over unknown landmarks of |R_hat B p_hat_i + p_hat - p_i|
  double W = 0.0;
};

/// Pose-observer inputs of every step plus the truth pose at each step end;
/// enough to re-run the pose observer alone with other gains or initial
/// conditions.
struct CascadeRecord {
  double dt = 0.0;
  std::vector<PoseStageInputs> inputs;
  std::vector<Matrix3> R;
  std::vector<Vector3> p;
};

/// Truth + LTV observer + pose observer, advanced together one dt at a time.
/// The truth is integrated at dt/2 so the LTV observer sees measurements at
/// the start, midpoint and end of each step.
class Scenario {
 public:
  explicit Scenario(const ScenarioConfig& cfg);

  void step();
  std::size_t total_steps() const { return total_steps_; }
  std::size_t steps_done() const { return k_; }
  bool done() const { return k_ >= total_steps_; }
  double time() const { return truth_.t; }

  const ScenarioConfig& config() const { return cfg_; }
  const LandmarkMap& map() const { return map_; }
  const AnchorSet& anchors() const { return anchors_; }
  const CameraRig& rig() const { return rig_; }
  const RigidBodyState& truth() const { return truth_; }
  const LtvObserver& ltv() const { return ltv_; }
  const PoseEstimate& pose() const { return pose_; }
  const LtvStages& last_stages() const { return stages_; }

  /// x at the current time from ground truth.
  Vector true_state() const;
  CascadeErrors errors() const;

  void record_cascade(bool on) { recording_ = on; }
  const CascadeRecord& cascade() const { return record_; }

 private:
  LtvMeasurement measure_at(const RigidBodyState& s) const;

  ScenarioConfig cfg_;
  TrajectorySpec spec_;
  CameraRig rig_;
  LandmarkMap map_;
  AnchorSet anchors_;
  PoseGains gains_;
  MeasureOptions measure_opts_;
  RigidBodyState truth_;
  LtvObserver ltv_;
  PoseEstimate pose_;
  LtvMeasurement current_;
  LtvStages stages_;
  std::size_t total_steps_ = 0;
  std::size_t k_ = 0;
  bool recording_ = false;
  CascadeRecord record_;
};

struct RunSummary {
  CascadeErrors terminal;
  std::size_t steps = 0;
  double min_p_eigenvalue = 0.0;   // over output rows
  double max_p_asymmetry = 0.0;    // over all steps
  double max_lyapunov_increase = 0.0;  // max (V_{k+1} - V_k) / V_k over all steps
  std::optional<ExponentialFit> fit;  // of |x~| on the configured fit window
  std::vector<double> times;        // every step, including t = 0
  std::vector<double> xtilde;       // |x~| at those times
  std::vector<double> lyapunov;     // x~^T P^-1 x~ at those times
};

struct RunOptions {
  /// Directory for truth.csv, ltv.csv, pose.csv and landmarks.csv; nothing
  /// is written when empty.
  std::string out_dir;
  bool record_cascade = false;
  /// Symmetric eigensolve of P at every output row.
  bool track_spectrum = true;
};

struct RunResult {
  RunSummary summary;
  CascadeRecord cascade;
  AnchorSet anchors;
  LandmarkMap map;
  ExtendedState ltv_estimate;
  PoseEstimate pose;
  RigidBodyState truth;
};

RunResult run_scenario(const ScenarioConfig& cfg, const RunOptions& options = {});

struct ReplayResult {
  PoseEstimate pose;
  PoseError error;
  double attitude = 0.0;
  double ptilde = 0.0;
  double position = 0.0;
  double W = 0.0;
};

/// Runs the pose observer alone over a recorded cascade.
ReplayResult replay_pose(const CascadeRecord& record, const AnchorSet& anchors,
                         const PoseGains& gains, const PoseEstimate& initial);

/// R_hat(0), p_hat(0) placing the initial pose error exactly at
/// R~ = exp(pi v), p~ = 0, v the eigen_index-th eigenvector of M, for the
/// truth pose (R0, p0).
PoseEstimate antipodal_initial_pose(const AnchorSet& anchors, std::size_t eigen_index,
                                    const Matrix3& R0, const Vector3& p0);

struct ObservabilityResult {
  PeReport pe;
  std::vector<GramianEntry> direct;
  std::vector<GramianEntry> factored;
  std::vector<double> relative_difference;  // |W_f - W_d|_F / |W_d|_F per window
  bool observable = false;                  // every direct min eigenvalue > 0
};

/// PE check and Gramians (both methods) for the configured trajectory;
/// writes pe.csv and gramian.csv when out_dir is set.
ObservabilityResult check_observability(const ScenarioConfig& cfg, const std::string& out_dir = {});

struct SweepRow {
  std::string parameter;
  double value = 0.0;
  std::string label;
  double attitude = 0.0;
  double ptilde = 0.0;
  double xtilde = 0.0;
  double position = 0.0;
  double rate = 0.0;  // fitted lambda, NaN when no fit window
  bool converged = false;
};

/// Names accepted by sweep().
const std::vector<std::string>& sweep_parameters();

/// One run per value (angles in units of pi). k_R, k_p and init_angle share
/// one LTV run and re-run only the pose observer. The init_angle sweep adds
/// one labeled row per undesired-equilibrium initialization. Throws
/// UnknownParameter for other names. Writes summary.csv when out_dir is set.
std::vector<SweepRow> sweep(const ScenarioConfig& cfg, const std::string& parameter,
                            const std::vector<double>& values, const std::string& out_dir = {});

}  // namespace casnav
