#include "casnav/ltv_observer.hpp"

#include <string>
#include <utility>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "casnav/error.hpp"
#include "casnav/integrate.hpp"

namespace casnav {
namespace {

void require(bool ok, ErrorCode code, const std::string& what) {
  if (!ok) {
    throw Error(code, what);
  }
}

void check_square_spd(const Matrix& m, Eigen::Index n, const char* name) {
  require(m.rows() == n && m.cols() == n, ErrorCode::DimensionMismatch,
          std::string("riccati config: ") + name + " has wrong dimensions");
  require(m.allFinite(), ErrorCode::NonFinite, std::string("riccati config: ") + name + " is not finite");
  require((m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-9 * (1.0 + m.cwiseAbs().maxCoeff()),
          ErrorCode::InvalidArgument, std::string("riccati config: ") + name + " is not symmetric");
  require(Eigen::LLT<Matrix>(m).info() == Eigen::Success, ErrorCode::InvalidArgument,
          std::string("riccati config: ") + name + " is not positive definite");
}

void check_measurement(const LtvMeasurement& m, std::size_t landmarks) {
  require(m.projectors.size() == landmarks && m.outputs.size() == landmarks,
          ErrorCode::DimensionMismatch,
          "ltv observer: expected " + std::to_string(landmarks) + " bearings, got " +
              std::to_string(m.projectors.size()));
  require(m.omega.allFinite() && m.accel.allFinite(), ErrorCode::NonFinite,
          "ltv observer: non-finite IMU input");
}

Matrix symmetrized(const Matrix& p) { return 0.5 * (p + p.transpose()); }

// C x_hat: stacked Pi_i * x_i.
Vector output_of(const Vector& xhat, std::span<const Matrix3> projectors) {
  Vector cx(3 * projectors.size());
  for (std::size_t i = 0; i < projectors.size(); ++i) {
    cx.segment<3>(3 * i) = projectors[i] * xhat.segment<3>(3 * i);
  }
  return cx;
}

Vector stacked(std::span<const Vector3> outputs) {
  Vector y(3 * outputs.size());
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    y.segment<3>(3 * i) = outputs[i];
  }
  return y;
}

Vector apply_system(const Vector3& omega, const Vector& x, std::size_t landmarks) {
  return casnav::apply_system(omega, Matrix(x), landmarks).col(0);
}

// A x + B a + P C^T Q (y - C x), without forming K.
Vector observer_rate_from_p(const Vector& xhat, const Matrix& P, const LtvMeasurement& m,
                            const RiccatiConfig& cfg) {
  const std::size_t n = cfg.landmarks();
  Vector rate = apply_system(m.omega, xhat, n);
  rate.segment<3>(3 * n) += m.accel;
  Vector innovation = stacked(m.outputs) - output_of(xhat, m.projectors);
  Vector weighted = cfg.q_is_diagonal() ? Vector(cfg.Q().diagonal().cwiseProduct(innovation))
                                        : Vector(cfg.Q() * innovation);
  for (std::size_t i = 0; i < n; ++i) {
    weighted.segment<3>(3 * i) = m.projectors[i] * weighted.segment<3>(3 * i);
  }
  rate.noalias() += P.leftCols(3 * n) * weighted;
  return rate;
}

struct LtvIntegrationState {
  Vector x;
  Matrix P;
};

LtvIntegrationState operator+(const LtvIntegrationState& a, const LtvIntegrationState& b) {
  return {a.x + b.x, a.P + b.P};
}

LtvIntegrationState operator*(double s, const LtvIntegrationState& a) { return {s * a.x, s * a.P}; }

}  // namespace

ExtendedState::ExtendedState(std::size_t n, Vector values) : landmarks(n), x(std::move(values)) {
  require(static_cast<std::size_t>(x.size()) == 3 * n + 6, ErrorCode::DimensionMismatch,
          "extended state: expected dimension " + std::to_string(3 * n + 6));
}

ExtendedState ExtendedState::from_truth(const RigidBodyState& truth, const LandmarkMap& map,
                                        const Vector3& g) {
  ExtendedState s(map.size());
  for (std::size_t i = 0; i < map.size(); ++i) {
    s.landmark(i) = body_landmark(truth.R, truth.p, map.positions[i]);
  }
  s.velocity() = truth.v;
  s.gravity() = truth.R.transpose() * g;
  return s;
}

LtvMatrices build_system(const Vector3& omega, std::span<const Matrix3> projectors) {
  const auto n = static_cast<Eigen::Index>(projectors.size());
  const Eigen::Index dim = 3 * n + 6;
  require(n >= 1, ErrorCode::DimensionMismatch, "build_system: no bearings");
  const Matrix3 w = skew(omega);
  LtvMatrices m{Matrix::Zero(dim, dim), Matrix::Zero(dim, 3), Matrix::Zero(3 * n, dim)};
  for (Eigen::Index i = 0; i < n; ++i) {
    m.A.block<3, 3>(3 * i, 3 * i) = -w;
    m.A.block<3, 3>(3 * i, 3 * n) = -Matrix3::Identity();
    m.C.block<3, 3>(3 * i, 3 * i) = projectors[static_cast<std::size_t>(i)];
  }
  m.A.block<3, 3>(3 * n, 3 * n) = -w;
  m.A.block<3, 3>(3 * n, 3 * n + 3) = Matrix3::Identity();
  m.A.block<3, 3>(3 * n + 3, 3 * n + 3) = -w;
  m.B.block<3, 3>(3 * n, 0) = Matrix3::Identity();
  return m;
}

LtvMatrices build_system(const Vector3& omega, const BearingSample& bearings,
                         const CameraRig& rig) {
  std::vector<Matrix3> projectors;
  projectors.reserve(bearings.bearings.size());
  for (std::size_t i = 0; i < bearings.bearings.size(); ++i) {
    const bool visible = bearings.visible.empty() || bearings.visible[i];
    projectors.push_back(visible ? modified_output(rig, bearings.bearings[i]).projector
                                 : Matrix3::Zero());
  }
  return build_system(omega, projectors);
}

RiccatiConfig::RiccatiConfig(Matrix Q, Matrix V, Matrix P0)
    : landmarks_(static_cast<std::size_t>(Q.rows() / 3)),
      q_(std::move(Q)),
      v_(std::move(V)),
      p0_(std::move(P0)) {
  require(q_.rows() % 3 == 0 && q_.rows() >= 9, ErrorCode::DimensionMismatch,
          "riccati config: Q must be 3N x 3N with N >= 3");
  const Eigen::Index dim = q_.rows() + 6;
  check_square_spd(q_, q_.rows(), "Q");
  check_square_spd(v_, dim, "V");
  check_square_spd(p0_, dim, "P0");
  const Matrix off = q_ - Matrix(q_.diagonal().asDiagonal());
  q_diagonal_ = off.cwiseAbs().maxCoeff() == 0.0;
  q_factor_ = Eigen::LLT<Matrix>(q_).matrixU();
}

RiccatiConfig RiccatiConfig::isotropic(std::size_t landmarks, double q, double v, double p0) {
  const auto n = static_cast<Eigen::Index>(landmarks);
  return RiccatiConfig(q * Matrix::Identity(3 * n, 3 * n), v * Matrix::Identity(3 * n + 6, 3 * n + 6),
                       p0 * Matrix::Identity(3 * n + 6, 3 * n + 6));
}

Matrix riccati_gain(const Matrix& P, std::span<const Matrix3> projectors, const RiccatiConfig& cfg) {
  const auto n = static_cast<Eigen::Index>(projectors.size());
  Matrix pct(P.rows(), 3 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    pct.middleCols<3>(3 * i) = P.middleCols<3>(3 * i) * projectors[static_cast<std::size_t>(i)];
  }
  if (cfg.q_is_diagonal()) {
    return pct * cfg.Q().diagonal().asDiagonal();
  }
  return pct * cfg.Q();
}

Matrix apply_system(const Vector3& omega, const Matrix& X, std::size_t landmarks) {
  const auto n = static_cast<Eigen::Index>(landmarks);
  require(X.rows() == 3 * n + 6, ErrorCode::DimensionMismatch, "apply_system: row mismatch");
  const Matrix3 w = skew(omega);
  Matrix out(X.rows(), X.cols());
  const auto v = X.middleRows<3>(3 * n);
  const auto eta = X.middleRows<3>(3 * n + 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.middleRows<3>(3 * i).noalias() = -w * X.middleRows<3>(3 * i);
    out.middleRows<3>(3 * i) -= v;
  }
  out.middleRows<3>(3 * n).noalias() = -w * v;
  out.middleRows<3>(3 * n) += eta;
  out.middleRows<3>(3 * n + 3).noalias() = -w * eta;
  return out;
}

Matrix riccati_rate(const Matrix& P, const Vector3& omega, std::span<const Matrix3> projectors,
                    const RiccatiConfig& cfg) {
  const auto n = static_cast<Eigen::Index>(cfg.landmarks());
  require(static_cast<Eigen::Index>(projectors.size()) == n && P.rows() == 3 * n + 6,
          ErrorCode::DimensionMismatch, "riccati_rate: dimension mismatch");
  const Matrix ap = apply_system(omega, P, cfg.landmarks());
  Matrix rate = ap + ap.transpose() + cfg.V();

  // P C^T Q C P = H^T H with H = U Lambda P_L, Q = U^T U.
  Matrix h(3 * n, P.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    h.middleRows<3>(3 * i).noalias() = projectors[static_cast<std::size_t>(i)] * P.middleRows<3>(3 * i);
  }
  if (cfg.q_is_diagonal()) {
    h = cfg.q_factor().diagonal().asDiagonal() * h;
  } else {
    h = cfg.q_factor().triangularView<Eigen::Upper>() * h;
  }
  rate.selfadjointView<Eigen::Lower>().rankUpdate(h.transpose(), -1.0);
  return rate.selfadjointView<Eigen::Lower>();
}

Matrix riccati_rate(const Matrix& P, const LtvMatrices& m, const RiccatiConfig& cfg) {
  return m.A * P + P * m.A.transpose() - P * m.C.transpose() * cfg.Q() * m.C * P + cfg.V();
}

RiccatiState riccati_step(const RiccatiState& rs, const LtvMatrices& m, const RiccatiConfig& cfg,
                          double dt, bool check_positivity) {
  require(dt > 0.0, ErrorCode::InvalidArgument, "riccati_step: dt must be positive");
  require(rs.P.rows() == m.A.rows() && rs.P.cols() == m.A.cols(), ErrorCode::DimensionMismatch,
          "riccati_step: P and A dimensions differ");
  const Matrix p1 = symmetrized(rk4_step(rs.P, dt, [&](int, const Matrix& p) -> Matrix {
    return riccati_rate(p, m, cfg);
  }));
  if (check_positivity && Eigen::LLT<Matrix>(p1).info() != Eigen::Success) {
    throw Error(ErrorCode::LostPositivity, "riccati_step: P lost positive definiteness");
  }
  return {p1, p1 * m.C.transpose() * cfg.Q()};
}

Vector observer_rate_stacked(const Vector& xhat, const Matrix& K, const LtvMatrices& m,
                             const Vector3& accel, const Vector& y) {
  return m.A * xhat + m.B * accel + K * (y - m.C * xhat);
}

Vector observer_rate_componentwise(const Vector& xhat, const Matrix& K, const Vector3& omega,
                                   const Vector3& accel, std::span<const Matrix3> projectors,
                                   std::span<const Vector3> outputs) {
  const std::size_t n = projectors.size();
  const auto ni = static_cast<Eigen::Index>(n);
  require(static_cast<std::size_t>(xhat.size()) == 3 * n + 6 && outputs.size() == n,
          ErrorCode::DimensionMismatch, "observer_rate_componentwise: dimension mismatch");
  const Vector innovation = stacked(outputs) - output_of(xhat, projectors);
  const Vector3 v = xhat.segment<3>(3 * ni);
  const Vector3 eta = xhat.segment<3>(3 * ni + 3);
  Vector rate(xhat.size());
  for (Eigen::Index i = 0; i < ni; ++i) {
    const Vector3 p = xhat.segment<3>(3 * i);
    rate.segment<3>(3 * i) = -omega.cross(p) - v + K.middleRows<3>(3 * i) * innovation;
  }
  rate.segment<3>(3 * ni) = -omega.cross(v) + eta + accel + K.middleRows<3>(3 * ni) * innovation;
  rate.segment<3>(3 * ni + 3) = -omega.cross(eta) + K.middleRows<3>(3 * ni + 3) * innovation;
  return rate;
}

LtvMeasurement make_measurement(const ImuSample& imu, const BearingSample& bearings) {
  return {imu.t, imu.omega, imu.accel, bearings.projectors, bearings.modified_outputs};
}

ExtendedState observer_step(const ExtendedState& xhat, const RiccatiState& rs,
                            const ImuSample& imu, const BearingSample& bearings, double dt) {
  require(dt > 0.0, ErrorCode::InvalidArgument, "observer_step: dt must be positive");
  require(xhat.x.allFinite() && imu.omega.allFinite() && imu.accel.allFinite(), ErrorCode::NonFinite,
          "observer_step: non-finite input");
  require(bearings.projectors.size() == xhat.landmarks &&
              rs.K.rows() == static_cast<Eigen::Index>(xhat.dim()),
          ErrorCode::DimensionMismatch, "observer_step: dimension mismatch");
  Vector next = rk4_step(xhat.x, dt, [&](int, const Vector& x) -> Vector {
    return observer_rate_componentwise(x, rs.K, imu.omega, imu.accel, bearings.projectors,
                                       bearings.modified_outputs);
  });
  return ExtendedState(xhat.landmarks, std::move(next));
}

double lyapunov_value(const Vector& xtilde, const Matrix& P) {
  require(P.rows() == xtilde.size() && P.cols() == xtilde.size(), ErrorCode::DimensionMismatch,
          "lyapunov_value: dimension mismatch");
  const Eigen::LLT<Matrix> llt(P);
  require(llt.info() == Eigen::Success, ErrorCode::SingularMatrix,
          "lyapunov_value: P is not positive definite");
  const Vector w = llt.matrixL().solve(xtilde);
  return w.squaredNorm();
}

SpectrumBounds spectrum_bounds(const Matrix& P) {
  const Eigen::SelfAdjointEigenSolver<Matrix> es(P, Eigen::EigenvaluesOnly);
  return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
}

LtvObserver::LtvObserver(RiccatiConfig cfg, ExtendedState xhat0, std::size_t check_every)
    : cfg_(std::move(cfg)), xhat_(std::move(xhat0)), check_every_(check_every == 0 ? 1 : check_every) {
  require(xhat_.landmarks == cfg_.landmarks(), ErrorCode::DimensionMismatch,
          "ltv observer: state and config disagree on the landmark count");
  require(xhat_.x.allFinite(), ErrorCode::NonFinite, "ltv observer: non-finite initial estimate");
  rs_.P = cfg_.P0();
  rs_.K = Matrix::Zero(xhat_.dim(), 3 * static_cast<Eigen::Index>(xhat_.landmarks));
}

LtvStages LtvObserver::step(const LtvMeasurement& start, const LtvMeasurement& mid,
                            const LtvMeasurement& end, double dt) {
  require(dt > 0.0, ErrorCode::InvalidArgument, "ltv observer: dt must be positive");
  const std::size_t n = cfg_.landmarks();
  check_measurement(start, n);
  check_measurement(mid, n);
  check_measurement(end, n);

  const std::array<const LtvMeasurement*, 4> stage_meas{&start, &mid, &mid, &end};
  LtvStages stages;
  const LtvIntegrationState x0{xhat_.x, rs_.P};
  const LtvIntegrationState x1 = rk4_step(x0, dt, [&](int stage, const LtvIntegrationState& s) {
    const LtvMeasurement& m = *stage_meas[static_cast<std::size_t>(stage)];
    stages[static_cast<std::size_t>(stage)] = s.x;
    return LtvIntegrationState{observer_rate_from_p(s.x, s.P, m, cfg_),
                               riccati_rate(s.P, m.omega, m.projectors, cfg_)};
  });

  require(x1.x.allFinite() && x1.P.allFinite(), ErrorCode::NonFinite,
          "ltv observer: integration produced non-finite values");
  xhat_.x = x1.x;
  rs_.P = symmetrized(x1.P);
  ++steps_;
  t_ = end.t;
  if (steps_ % check_every_ == 0 && Eigen::LLT<Matrix>(rs_.P).info() != Eigen::Success) {
    throw Error(ErrorCode::LostPositivity,
                "ltv observer: P lost positive definiteness at t=" + std::to_string(t_));
  }
  rs_.K = riccati_gain(rs_.P, end.projectors, cfg_);
  return stages;
}

}  // namespace casnav
