#pragma once

#include <Eigen/Dense>

namespace casnav {

using Vector3 = Eigen::Vector3d;
using Matrix3 = Eigen::Matrix3d;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Unit-norm 3-vector (bearings). Same storage as Vector3; the norm is a
/// documented precondition rather than a type-level guarantee.
using UnitVector3 = Eigen::Vector3d;

/// Cross-product matrix: skew(v) * w == v.cross(w).
Matrix3 skew(const Vector3& v);

/// Half the vee of the antisymmetric part of A, so that
/// tr(A^T skew(u)) == 2 u^T psi(A).
Vector3 psi(const Matrix3& a);

/// Orthogonal projector onto the plane normal to the unit vector x.
Matrix3 proj(const UnitVector3& x);

/// Rodrigues exponential of skew(u).
Matrix3 exp_so3(const Vector3& u);

/// |R|_I = tr(I - R) / 4, in [0, 1] for rotations.
double attitude_distance(const Matrix3& r);

/// Nearest rotation in Frobenius norm (polar factor with det = +1).
Matrix3 orthonormalize(const Matrix3& m);

bool is_rotation(const Matrix3& r, double tol = 1e-9);

}  // namespace casnav
