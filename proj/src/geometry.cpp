#include "casnav/geometry.hpp"

#include <cmath>

#include <Eigen/SVD>

namespace casnav {

Matrix3 skew(const Vector3& v) {
  Matrix3 s;
  s << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return s;
}

Vector3 psi(const Matrix3& a) {
  return 0.5 * Vector3(a(2, 1) - a(1, 2), a(0, 2) - a(2, 0), a(1, 0) - a(0, 1));
}

Matrix3 proj(const UnitVector3& x) {
  return Matrix3::Identity() - x * x.transpose();
}

Matrix3 exp_so3(const Vector3& u) {
  const double theta = u.norm();
  const Matrix3 k = skew(u);
  if (theta < 1e-6) {
    return Matrix3::Identity() + k + 0.5 * k * k;
  }
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / (theta * theta);
  return Matrix3::Identity() + a * k + b * k * k;
}

double attitude_distance(const Matrix3& r) {
  return 0.25 * (3.0 - r.trace());
}

Matrix3 orthonormalize(const Matrix3& m) {
  Eigen::JacobiSVD<Matrix3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Matrix3 u = svd.matrixU();
  const Matrix3& v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) {
    u.col(2) = -u.col(2);
  }
  return u * v.transpose();
}

bool is_rotation(const Matrix3& r, double tol) {
  if (!r.allFinite()) {
    return false;
  }
  const double ortho = (r.transpose() * r - Matrix3::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tol && std::abs(r.determinant() - 1.0) <= tol;
}

}  // namespace casnav
