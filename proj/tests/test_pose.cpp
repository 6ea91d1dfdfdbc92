#include <cmath>
#include <numbers>
#include <vector>

#include "casnav/analysis.hpp"
#include "casnav/pose_observer.hpp"
#include "casnav/sensors.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace casnav;
using casnav::test::kRandomCases;
using casnav::test::Rng;
using casnav::test::thrown_code;

namespace {

constexpr double kPi = std::numbers::pi;

// Random anchors with random weights; retried until Mbar's spectrum is
// clearly non-degenerate.
AnchorSet random_anchors(Rng& rng, std::size_t m) {
  for (;;) {
    std::vector<Vector3> pts;
    std::vector<double> w;
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      pts.push_back(rng.vec(5.0));
      w.push_back(rng.uniform(0.2, 1.0));
      total += w.back();
    }
    for (double& x : w) {
      x /= total;
    }
    try {
      return build_anchors(pts, w, {.tune_weights = false, .eig_gap_tol = 1e-3});
    } catch (const Error&) {
    }
  }
}

struct RandomCase {
  AnchorSet anchors;
  Matrix3 R;
  Vector3 p;
  PoseEstimate pose;
  std::vector<Vector3> bp;      // true body-frame landmarks
  std::vector<Vector3> bp_hat;  // estimates
};

RandomCase random_case(Rng& rng, double landmark_noise) {
  RandomCase c;
  c.anchors = random_anchors(rng, 3 + static_cast<std::size_t>(rng.uniform(0, 4)));
  c.R = rng.rotation();
  c.p = rng.vec(5.0);
  c.pose = {rng.rotation(), rng.vec(5.0)};
  for (const auto& a : c.anchors.anchors) {
    c.bp.push_back(c.R.transpose() * (a - c.p));
    c.bp_hat.push_back(c.bp.back() + rng.vec(landmark_noise));
  }
  return c;
}

}  // namespace

TEST_CASE("anchor center and weighted offsets") {
  const std::vector<Vector3> pts{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  const std::vector<double> w(4, 0.25);
  const AnchorSet a = build_anchors(pts, w, {.tune_weights = false, .require_distinct = false});
  CHECK((a.center - Vector3(0.25, 0.25, 0.25)).norm() < 1e-15);
  // symmetric about (1,1,1): two equal eigenvalues, so the default options tune
  CHECK(build_anchors(pts, w).tuning_steps > 0);

  Rng rng(41);
  for (int k = 0; k < kRandomCases; ++k) {
    const AnchorSet r = random_anchors(rng, 3 + static_cast<std::size_t>(k % 5));
    Vector3 sum = Vector3::Zero();
    double wsum = 0.0;
    Matrix3 M = Matrix3::Zero();
    for (std::size_t i = 0; i < r.size(); ++i) {
      sum += r.weights[i] * r.offsets[i];
      wsum += r.weights[i];
      M += r.weights[i] * (r.anchors[i] - r.center) * (r.anchors[i] - r.center).transpose();
    }
    CHECK(sum.norm() < 1e-12);
    CHECK(std::abs(wsum - 1.0) < 1e-12);
    CHECK((r.M - M).norm() < 1e-12);
    CHECK((r.Mbar - 0.5 * (M.trace() * Matrix3::Identity() - M)).norm() < 1e-12);
    CHECK(r.mbar_eigenvalues(0) > 0.0);
    // Mbar and M share eigenvectors
    for (int j = 0; j < 3; ++j) {
      const Vector3 v = r.m_eigenvectors.col(j);
      CHECK((r.M * v - r.m_eigenvalues(j) * v).norm() < 1e-10);
      CHECK((r.Mbar * v - 0.5 * (M.trace() - r.m_eigenvalues(j)) * v).norm() < 1e-10);
    }
    CHECK(r.m_eigenvectors.determinant() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("grid-corner anchors with uniform weights are degenerate") {
  const LandmarkMap map = grid_landmarks();
  // 4x4 corners at (+-4, +-4, 0), rho = 1/4: M = diag(16, 16, 0),
  // Mbar = (32 I - M) / 2 = diag(8, 8, 16).
  const AnchorSet u = build_anchors(map, {.tune_weights = false, .require_distinct = false});
  CHECK(u.center.norm() < 1e-15);
  CHECK((u.M - Vector3(16, 16, 0).asDiagonal().toDenseMatrix()).norm() < 1e-12);
  CHECK((u.mbar_eigenvalues - Vector3(8, 8, 16)).norm() < 1e-12);
  CHECK(thrown_code([&] { build_anchors(map, {.tune_weights = false}); }) == ErrorCode::RepeatedEigenvalues);
}

TEST_CASE("grid-corner anchors after weight tuning") {
  const AnchorSet t = build_anchors(grid_landmarks());
  // One tuning step: rho = (0.2625, 0.2375, 0.25, 0.25), p_o = (-0.1, 0, 0),
  // M_xx = 16 - 0.01, M_yy = 16, M_xy = 16 * 0.025 = 0.4, M_zz = 0.
  CHECK(t.tuning_steps == 1);
  CHECK(t.weights[0] == doctest::Approx(0.2625).epsilon(1e-14));
  CHECK(t.weights[1] == doctest::Approx(0.2375).epsilon(1e-14));
  CHECK((t.center - Vector3(-0.1, 0, 0)).norm() < 1e-14);
  const double mean = (15.99 + 16.0) / 2.0;
  const double half = std::sqrt(0.005 * 0.005 + 0.4 * 0.4);
  const double tr = 31.99;
  const Vector3 expected((tr - (mean + half)) / 2.0, (tr - (mean - half)) / 2.0, tr / 2.0);
  CHECK((t.mbar_eigenvalues - expected).norm() < 1e-12);
  CHECK(t.mbar_eigenvalues(0) == doctest::Approx(7.7975).epsilon(1e-4));
  CHECK(t.mbar_eigenvalues(1) == doctest::Approx(8.1975).epsilon(1e-4));
}

TEST_CASE("anchor validation") {
  const std::vector<Vector3> aligned{{0, 0, 0}, {1, 1, 1}, {2, 2, 2}, {-1, -1, -1}};
  const std::vector<double> w(4, 0.25);
  CHECK(thrown_code([&] { build_anchors(aligned, w); }) == ErrorCode::DegenerateAnchors);
  const std::vector<Vector3> two{{0, 0, 0}, {1, 0, 0}};
  CHECK(thrown_code([&] { build_anchors(two, std::vector<double>{0.5, 0.5}); }) == ErrorCode::DegenerateAnchors);
  const std::vector<Vector3> pts{{0, 0, 0}, {1, 0, 0}, {0, 2, 0}};
  CHECK(thrown_code([&] { build_anchors(pts, std::vector<double>{0.5, 0.5, 0.5}); }) == ErrorCode::InvalidArgument);
  CHECK(thrown_code([&] { build_anchors(pts, std::vector<double>{0.5, 0.5}); }) == ErrorCode::DimensionMismatch);
  CHECK(thrown_code([&] { build_anchors(pts, std::vector<double>{1.2, -0.1, -0.1}); }) == ErrorCode::InvalidArgument);
  CHECK_NOTHROW(build_anchors(pts, std::vector<double>{0.2, 0.3, 0.5}));
}

TEST_CASE("innovations at and near the truth") {
  Rng rng(42);
  for (int k = 0; k < kRandomCases; ++k) {
    const RandomCase c = random_case(rng, 0.0);
    const Innovations zero = innovations(c.anchors, {c.R, c.p}, c.bp);
    CHECK(zero.sigma_R.norm() < 1e-12);
    CHECK(zero.sigma_p.norm() < 1e-12);
    const Vector3 d = rng.vec(3.0);
    const Innovations shifted = innovations(c.anchors, {c.R, c.p + d}, c.bp);
    CHECK((shifted.sigma_p + d).norm() < 1e-12);
    CHECK(shifted.sigma_R.norm() < 1e-12);
  }
}

TEST_CASE("innovation decomposition and xi identity") {
  Rng rng(43);
  for (int k = 0; k < kRandomCases; ++k) {
    const RandomCase c = random_case(rng, 1.0);
    const AnchorSet& a = c.anchors;
    const PoseError e = pose_error(c.R, c.p, c.pose, a);
    Vector3 sigma_R = psi(a.M * e.R), sigma_p = e.R.transpose() * e.p;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const Vector3 bpt = c.bp[i] - c.bp_hat[i];
      const Vector3 xi = a.anchors[i] - c.pose.p - c.pose.R * c.bp_hat[i];
      const Vector3 rhs = e.R.transpose() * e.p + (Matrix3::Identity() - e.R.transpose()) * a.offsets[i] +
                          c.pose.R * bpt;
      CHECK((xi - rhs).norm() < 1e-10);
      sigma_R += 0.5 * a.weights[i] * a.offsets[i].cross(c.pose.R * bpt);
      sigma_p += a.weights[i] * c.pose.R * bpt;
    }
    const Innovations inn = innovations(a, c.pose, c.bp_hat);
    CHECK((inn.sigma_R - sigma_R).norm() < 1e-10);
    CHECK((inn.sigma_p - sigma_p).norm() < 1e-10);
  }
}

TEST_CASE("pose error") {
  Rng rng(44);
  for (int k = 0; k < kRandomCases; ++k) {
    const RandomCase c = random_case(rng, 0.0);
    const PoseError at = pose_error(c.R, c.p, {c.R, c.p}, c.anchors);
    CHECK((at.R - Matrix3::Identity()).norm() < 1e-14);
    CHECK(at.p.norm() < 1e-13);
    CHECK(ultimate_bound_monitor(at) < 1e-26);
    const Vector3 d = rng.vec(2.0);
    CHECK((pose_error(c.R, c.p, {c.R, c.p + d}, c.anchors).p + d).norm() < 1e-13);
    const PoseError e = pose_error(c.R, c.p, c.pose, c.anchors);
    CHECK(is_rotation(e.R, 1e-12));
    // (R~, p~) = (I, 0) only at the true pose
    CHECK(ultimate_bound_monitor(e) > 0.0);
  }
  PoseError half;
  half.R = exp_so3(kPi * Vector3(1, 2, 2) / 3.0);
  CHECK(ultimate_bound_monitor(half) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("error dynamics agree with observer and truth kinematics") {
  // d/dt of (R R_hat^T, p - R~ p_hat - (I - R~) p_o) by the chain rule,
  // against the closed-form error system driven by x~ = x - x_hat.
  Rng rng(45);
  const PoseGains gains{40.0, 100.0};
  for (int k = 0; k < kRandomCases; ++k) {
    RandomCase c = random_case(rng, 0.5);
    const AnchorSet& a = c.anchors;
    const std::size_t m = a.size(), n = m + 2;
    const Vector3 w = rng.vec(2.0), v = rng.vec(3.0), vhat = v + rng.vec(0.5);

    Vector xtilde = Vector::Zero(static_cast<Eigen::Index>(3 * n + 6));
    for (std::size_t i = 0; i < m; ++i) {
      xtilde.segment<3>(static_cast<Eigen::Index>(3 * i)) = c.bp[i] - c.bp_hat[i];
    }
    xtilde.segment<3>(static_cast<Eigen::Index>(3 * m)) = rng.vec(1.0);  // unknown landmarks, ignored
    xtilde.segment<3>(static_cast<Eigen::Index>(3 * n)) = v - vhat;
    xtilde.segment<3>(static_cast<Eigen::Index>(3 * n + 3)) = rng.vec(1.0);  // gravity, ignored

    const PoseRate r = pose_rate(c.pose, {w, vhat, c.bp_hat}, gains, a);
    const Matrix3 Rdot = c.R * skew(w);
    const Vector3 pdot = c.R * v;
    const PoseError e = pose_error(c.R, c.p, c.pose, a);
    const Matrix3 Rt_dot = Rdot * c.pose.R.transpose() + c.R * r.R.transpose();
    const Vector3 pt_dot = pdot - Rt_dot * c.pose.p - e.R * r.p + Rt_dot * a.center;

    const ErrorSystemRate closed = pose_error_rate(a, gains, e, c.R, xtilde);
    CHECK((closed.R - Rt_dot).norm() <= 1e-10 * (1.0 + Rt_dot.norm()));
    CHECK((closed.p - pt_dot).norm() <= 1e-10 * (1.0 + pt_dot.norm()));
  }
}

TEST_CASE("pose step equilibrium and gyro propagation") {
  const LandmarkMap map = grid_landmarks();
  const AnchorSet a = build_anchors(map);
  const PoseGains gains{40.0, 100.0};
  const Matrix3 R = exp_so3(Vector3(0.2, -0.4, 1.0));
  const Vector3 p(1, 2, 3);
  PoseStageInput in{Vector3::Zero(), Vector3::Zero(), {}};
  for (std::size_t i = 0; i < a.size(); ++i) {
    in.bp_hat.push_back(R.transpose() * (a.anchors[i] - p));
  }
  PoseEstimate pose{R, p};
  for (int k = 0; k < 1000; ++k) {
    pose = pose_step(pose, in, gains, a, 1e-3);
  }
  CHECK((pose.R - R).norm() < 1e-13);
  CHECK((pose.p - p).norm() < 1e-13);

  // negligible gains: pure gyro integration
  const PoseGains tiny{1e-300, 1e-300};
  in.omega = Vector3(0, 0, 1);
  pose = {R, p};
  for (int k = 0; k < 1000; ++k) {
    pose = pose_step(pose, in, tiny, a, 1e-3);
  }
  CHECK((pose.R - R * exp_so3(Vector3(0, 0, 1.0))).norm() < 1e-12);

  CHECK(thrown_code([&] { pose_step(pose, in, gains, a, 0.0); }) == ErrorCode::InvalidArgument);
  in.vhat.x() = std::nan("");
  CHECK(thrown_code([&] { pose_step(pose, in, gains, a, 1e-3); }) == ErrorCode::NonFinite);
  CHECK(thrown_code([] { PoseGains{0.0, 1.0}.validate(); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("landmark reconstruction") {
  Rng rng(46);
  for (int k = 0; k < kRandomCases; ++k) {
    const Matrix3 R = rng.rotation();
    const Vector3 p = rng.vec(5.0);
    std::vector<Vector3> world, body;
    for (int i = 0; i < 6; ++i) {
      world.push_back(rng.vec(10.0));
      body.push_back(R.transpose() * (world.back() - p));
    }
    const auto rec = reconstruct_landmarks({R, p}, body);
    for (int i = 0; i < 6; ++i) {
      CHECK((rec[static_cast<std::size_t>(i)] - world[static_cast<std::size_t>(i)]).norm() < 1e-12);
    }
    const auto ident = reconstruct_landmarks({}, body);
    CHECK((ident[3] - body[3]).norm() == 0.0);
  }
}

TEST_CASE("pose inputs slice the LTV stages") {
  LtvStages stages;
  for (int s = 0; s < 4; ++s) {
    stages[static_cast<std::size_t>(s)] = Vector::LinSpaced(3 * 5 + 6, s, s + 20.0);
  }
  const std::array<Vector3, 4> w{Vector3(1, 0, 0), Vector3(2, 0, 0), Vector3(2, 0, 0), Vector3(3, 0, 0)};
  const PoseStageInputs in = pose_inputs(stages, w, 5, 3);
  CHECK(in[2].bp_hat.size() == 3);
  CHECK((in[1].bp_hat[2] - Vector3(stages[1].segment<3>(6))).norm() == 0.0);
  CHECK((in[3].vhat - Vector3(stages[3].segment<3>(15))).norm() == 0.0);
  CHECK(in[3].omega.x() == 3.0);
  CHECK(thrown_code([&] { pose_inputs(stages, w, 4, 3); }) == ErrorCode::DimensionMismatch);
}
