#pragma once

#include <cstddef>
#include <istream>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "casnav/dynamics.hpp"
#include "casnav/geometry.hpp"

namespace casnav {

/// Landmarks closer than this to the camera center have no defined bearing.
inline constexpr double kDepthFloor = 1e-6;

/// Camera extrinsics (R_c, p_c: camera pose in the body frame) and pinhole
/// intrinsics K.
struct CameraRig {
  Matrix3 R_c = Matrix3::Identity();
  Vector3 p_c = Vector3::Zero();
  Matrix3 K = Matrix3::Identity();

  /// Throws InvalidArgument / SingularIntrinsics on a malformed rig.
  void validate() const;
};

/// Inertial landmark positions. The first `known_count` entries are known in
/// the inertial frame and anchor the pose observer.
struct LandmarkMap {
  std::vector<Vector3> positions;
  std::size_t known_count = 0;

  std::size_t size() const { return positions.size(); }
  void validate() const;
};

struct BearingSample {
  double t = 0.0;
  std::vector<UnitVector3> bearings;     // camera frame
  std::vector<Matrix3> projectors;       // pi(R_c z_i); zero when not visible
  std::vector<Vector3> modified_outputs;  // projectors[i] * p_c
  std::vector<bool> visible;
};

/// B p_i = R^T (p_i - p)
Vector3 body_landmark(const Matrix3& R, const Vector3& p, const Vector3& landmark);

/// C p_i = R_c^T (B p_i - p_c)
Vector3 camera_landmark(const CameraRig& rig, const Vector3& body_point);

/// Unit bearing in the camera frame. Throws DegenerateDepth when the point is
/// within kDepthFloor of the camera center.
UnitVector3 bearing(const CameraRig& rig, const Vector3& body_point);

/// Pinhole projection of a camera-frame point. Throws BehindCamera when the
/// depth is not above kDepthFloor.
Eigen::Vector2d pixel_from_point(const CameraRig& rig, const Vector3& camera_point);

/// Back-projected unit bearing K^-1 [u v 1]^T / |.|.
UnitVector3 bearing_from_pixel(const CameraRig& rig, const Eigen::Vector2d& pixel);

struct ModifiedOutput {
  Matrix3 projector;  // Pi_z = pi(R_c z)
  Vector3 y;          // Pi_z p_c
};

ModifiedOutput modified_output(const CameraRig& rig, const UnitVector3& z);

struct MeasureOptions {
  /// Half-angle cone about the optical axis; landmarks outside it (or behind
  /// the camera) are reported not visible. Disabled when empty.
  std::optional<double> fov_half_angle;
};

/// Bearings and modified outputs for every landmark at the given true state.
BearingSample measure(const CameraRig& rig, const LandmarkMap& map, const RigidBodyState& state,
                      const MeasureOptions& options = {});

/// Square grid on the ground plane z = 0 spanning [-half_extent, half_extent]^2
/// with per_side points per side. The four corners come first (counter
/// clockwise from (-h, -h)), followed by the remaining points in row order;
/// `known` landmarks are flagged as known.
LandmarkMap grid_landmarks(double half_extent = 4.0, std::size_t per_side = 4,
                           std::size_t known = 4);

/// Plain-text table, one landmark per line: `x y z known_flag`. Blank lines
/// and `#` comments are ignored. Known landmarks must precede unknown ones.
LandmarkMap parse_landmarks(std::istream& in, const std::string& source = "<stream>");
LandmarkMap load_landmarks(const std::string& path);

}  // namespace casnav
