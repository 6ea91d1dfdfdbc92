#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <string>
#include <vector>

#include "casnav/dynamics.hpp"
#include "casnav/geometry.hpp"
#include "casnav/pose_observer.hpp"
#include "casnav/sensors.hpp"

namespace casnav {

/// How the pose observer weights the known landmarks.
enum class WeightPolicy {
  Tuned,     // uniform, perturbed until Mbar has distinct eigenvalues
  Uniform,   // exactly 1/M, degenerate spectrum tolerated
  Explicit,  // listed in the config, must give distinct eigenvalues
};

/// Everything a run needs. Angles are stored in radians; the config file
/// writes them in units of pi.
struct ScenarioConfig {
  // [trajectory]
  std::string trajectory = "figure_eight";  // figure_eight | line
  Vector3 line_origin{0.0, 0.0, 2.0};
  Vector3 line_velocity{0.0, 0.0, 0.1};
  Vector3 gravity{0.0, 0.0, -9.81};

  // [landmarks]
  std::string landmark_file;  // empty: square grid
  double grid_half_extent = 4.0;
  std::size_t grid_per_side = 4;
  std::size_t known = 4;

  // [camera]
  Vector3 camera_rotation = Vector3::Zero();  // rotation vector, radians
  Vector3 camera_position{0.02, 0.06, 0.01};
  Matrix3 intrinsics = (Matrix3() << 500.0, 0.0, 320.0, 0.0, 500.0, 240.0, 0.0, 0.0, 1.0).finished();
  std::optional<double> fov_half_angle;  // radians

  // [ltv]
  double q = 1e-4;
  double v = 1e6;
  double p0 = 1.0;
  std::size_t check_every = 100;
  Vector3 init_velocity = Vector3::Zero();
  Vector3 init_gravity = Vector3::Zero();
  Vector3 init_landmark = Vector3::Zero();  // every body-frame landmark estimate

  // [pose]
  double k_R = 40.0;
  double k_p = 100.0;
  WeightPolicy weight_policy = WeightPolicy::Tuned;
  std::vector<double> weights;                  // WeightPolicy::Explicit
  Vector3 init_axis = Vector3::Ones().normalized();
  bool random_axis = false;  // draw the axis from the seed instead
  double init_angle = 0.9 * 3.14159265358979323846;  // radians
  Vector3 init_position = Vector3::Zero();

  // [sim]
  double dt = 1e-3;
  double horizon = 20.0;
  std::size_t output_stride = 10;
  std::uint64_t seed = 0;

  // [analysis]
  double window = 2.0;
  double window_step = 0.1;
  double mu_o = 1e-3;
  std::size_t sample_stride = 5;
  double fit_start = 1.0;
  double fit_end = 15.0;

  /// Throws InvalidArgument naming the offending field.
  void validate() const;

  TrajectorySpec trajectory_spec() const;
  CameraRig rig() const;
  /// A relative landmark file is resolved against base_dir.
  LandmarkMap landmark_map() const;
  AnchorSet anchors(const LandmarkMap& map) const;
  PoseGains gains() const { return {k_R, k_p}; }
  /// Rotation axis of R_hat(0); a seeded draw when random_axis is set.
  Vector3 initial_axis() const;
  PoseEstimate initial_pose() const;

  std::string base_dir;  // directory of the config file, for relative paths
};

/// Parses the INI text. Unknown sections or keys and malformed values throw
/// ConfigParse with "<source>:<line>: [section] key: ..." diagnostics.
ScenarioConfig parse_config(std::istream& in, const std::string& source = "<config>");
ScenarioConfig load_config(const std::string& path);

/// Applies one `key = value` assignment to `cfg`, as in a config file line.
/// `key` is `section.name`.
void set_config_value(ScenarioConfig& cfg, const std::string& key, const std::string& value);

/// Canonical INI text of `cfg` (round-trips through parse_config).
std::string to_ini(const ScenarioConfig& cfg);

}  // namespace casnav
