#include "casnav/sensors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <Eigen/LU>

#include "casnav/error.hpp"

namespace casnav {

void CameraRig::validate() const {
  if (!is_rotation(R_c)) {
    throw Error(ErrorCode::InvalidArgument, "camera rig: R_c is not a rotation");
  }
  if (!p_c.allFinite() || !K.allFinite()) {
    throw Error(ErrorCode::NonFinite, "camera rig: non-finite extrinsics or intrinsics");
  }
  if (K(1, 0) != 0.0 || K(2, 0) != 0.0 || K(2, 1) != 0.0) {
    throw Error(ErrorCode::InvalidArgument, "camera rig: K must be upper triangular");
  }
  if (!(K(0, 0) > 0.0 && K(1, 1) > 0.0 && K(2, 2) > 0.0)) {
    throw Error(ErrorCode::SingularIntrinsics, "camera rig: K needs a positive diagonal");
  }
}

void LandmarkMap::validate() const {
  if (positions.size() < 3) {
    throw Error(ErrorCode::InvalidArgument, "landmark map: need at least 3 landmarks");
  }
  if (known_count < 3 || known_count > positions.size()) {
    throw Error(ErrorCode::InvalidArgument,
                "landmark map: known count must satisfy 3 <= M <= N, got M=" +
                    std::to_string(known_count) + " N=" + std::to_string(positions.size()));
  }
  for (const auto& p : positions) {
    if (!p.allFinite()) {
      throw Error(ErrorCode::NonFinite, "landmark map: non-finite landmark");
    }
  }
  // known landmarks must not all lie on one line
  double spread = 0.0;
  const Vector3& a = positions[0];
  for (std::size_t i = 1; i < known_count; ++i) {
    for (std::size_t j = i + 1; j < known_count; ++j) {
      spread = std::max(spread, (positions[i] - a).cross(positions[j] - a).norm());
    }
  }
  if (!(spread > 1e-9)) {
    throw Error(ErrorCode::DegenerateAnchors, "landmark map: known landmarks are aligned");
  }
}

Vector3 body_landmark(const Matrix3& R, const Vector3& p, const Vector3& landmark) {
  return R.transpose() * (landmark - p);
}

Vector3 camera_landmark(const CameraRig& rig, const Vector3& body_point) {
  return rig.R_c.transpose() * (body_point - rig.p_c);
}

UnitVector3 bearing(const CameraRig& rig, const Vector3& body_point) {
  const Vector3 d = body_point - rig.p_c;
  const double depth = d.norm();
  if (!(depth > kDepthFloor)) {
    throw Error(ErrorCode::DegenerateDepth, "bearing: landmark coincides with the camera center");
  }
  return rig.R_c.transpose() * d / depth;
}

Eigen::Vector2d pixel_from_point(const CameraRig& rig, const Vector3& camera_point) {
  if (!(camera_point.z() > kDepthFloor)) {
    throw Error(ErrorCode::BehindCamera, "pixel_from_point: point is not in front of the camera");
  }
  const Vector3 h = rig.K * camera_point / camera_point.z();
  return h.head<2>();
}

UnitVector3 bearing_from_pixel(const CameraRig& rig, const Eigen::Vector2d& pixel) {
  const Eigen::FullPivLU<Matrix3> lu(rig.K);
  if (!lu.isInvertible()) {
    throw Error(ErrorCode::SingularIntrinsics, "bearing_from_pixel: K is singular");
  }
  const Vector3 ray = lu.solve(Vector3(pixel.x(), pixel.y(), 1.0));
  return ray / ray.norm();
}

ModifiedOutput modified_output(const CameraRig& rig, const UnitVector3& z) {
  const Matrix3 pi = proj(rig.R_c * z);
  return {pi, pi * rig.p_c};
}

BearingSample measure(const CameraRig& rig, const LandmarkMap& map, const RigidBodyState& state,
                      const MeasureOptions& options) {
  const std::size_t n = map.size();
  BearingSample out;
  out.t = state.t;
  out.bearings.resize(n);
  out.projectors.resize(n);
  out.modified_outputs.resize(n);
  out.visible.assign(n, true);
  const double cos_fov =
      options.fov_half_angle ? std::cos(*options.fov_half_angle) : -2.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vector3 bp = body_landmark(state.R, state.p, map.positions[i]);
    const UnitVector3 z = bearing(rig, bp);
    out.bearings[i] = z;
    if (options.fov_half_angle && z.z() < cos_fov) {
      out.visible[i] = false;
      out.projectors[i].setZero();
      out.modified_outputs[i].setZero();
      continue;
    }
    const ModifiedOutput m = modified_output(rig, z);
    out.projectors[i] = m.projector;
    out.modified_outputs[i] = m.y;
  }
  return out;
}

LandmarkMap grid_landmarks(double half_extent, std::size_t per_side, std::size_t known) {
  if (per_side < 2) {
    throw Error(ErrorCode::InvalidArgument, "grid_landmarks: need at least 2 points per side");
  }
  const auto coord = [&](std::size_t k) {
    return -half_extent + 2.0 * half_extent * static_cast<double>(k) /
                              static_cast<double>(per_side - 1);
  };
  const std::size_t last = per_side - 1;
  const std::size_t corners[4][2] = {{0, 0}, {last, 0}, {last, last}, {0, last}};
  LandmarkMap map;
  for (const auto& c : corners) {
    map.positions.emplace_back(coord(c[0]), coord(c[1]), 0.0);
  }
  for (std::size_t j = 0; j < per_side; ++j) {
    for (std::size_t i = 0; i < per_side; ++i) {
      const bool corner = (i == 0 || i == last) && (j == 0 || j == last);
      if (!corner) {
        map.positions.emplace_back(coord(i), coord(j), 0.0);
      }
    }
  }
  map.known_count = known;
  return map;
}

LandmarkMap parse_landmarks(std::istream& in, const std::string& source) {
  LandmarkMap map;
  bool seen_unknown = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    std::istringstream fields(line);
    double x = 0.0, y = 0.0, z = 0.0;
    int known = 0;
    std::string extra;
    if (!(fields >> x >> y >> z >> known) || (fields >> extra) || (known != 0 && known != 1)) {
      throw Error(ErrorCode::ConfigParse, source + ":" + std::to_string(line_no) +
                                              ": expected `x y z known_flag` (flag 0 or 1)");
    }
    if (known == 1) {
      if (seen_unknown) {
        throw Error(ErrorCode::ConfigParse,
                    source + ":" + std::to_string(line_no) +
                        ": known landmarks must be listed before unknown ones");
      }
      ++map.known_count;
    } else {
      seen_unknown = true;
    }
    map.positions.emplace_back(x, y, z);
  }
  return map;
}

LandmarkMap load_landmarks(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::Io, "cannot open landmark file " + path);
  }
  return parse_landmarks(in, path);
}

}  // namespace casnav
