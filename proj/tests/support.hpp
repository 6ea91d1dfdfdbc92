#pragma once

#include <cmath>
#include <optional>
#include <random>

#include "casnav/error.hpp"
#include "casnav/geometry.hpp"

namespace casnav::test {

inline constexpr int kRandomCases = 1000;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform(double lo = -1.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(gen_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(gen_); }

  Vector3 vec(double scale = 1.0) { return scale * Vector3(uniform(), uniform(), uniform()); }

  Vector3 unit() {
    Vector3 v;
    do {
      v = Vector3(normal(), normal(), normal());
    } while (v.norm() < 1e-9);
    return v.normalized();
  }

  Matrix3 mat(double scale = 1.0) { return scale * Matrix3::NullaryExpr([this](Eigen::Index, Eigen::Index) { return uniform(); }); }

  // Haar-distributed rotation via a random unit quaternion.
  Matrix3 rotation() {
    Eigen::Quaterniond q(normal(), normal(), normal(), normal());
    q.normalize();
    return q.toRotationMatrix();
  }

  Vector vector(Eigen::Index n, double scale = 1.0) {
    return scale * Vector::NullaryExpr(n, [this](Eigen::Index) { return uniform(); });
  }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

inline double rel_diff(const Matrix& a, const Matrix& b) {
  const double s = std::max(a.norm(), b.norm());
  return s > 0.0 ? (a - b).norm() / s : 0.0;
}

// Code of the casnav::Error thrown by fn, or nullopt when it returns normally.
template <class Fn>
std::optional<ErrorCode> thrown_code(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

}  // namespace casnav::test
