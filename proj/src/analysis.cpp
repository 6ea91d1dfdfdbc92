#include "casnav/analysis.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Eigenvalues>

#include "casnav/error.hpp"
#include "casnav/integrate.hpp"
#include "casnav/ltv_observer.hpp"

namespace casnav {
namespace {

void require(bool ok, ErrorCode code, const std::string& what) {
  if (!ok) {
    throw Error(code, what);
  }
}

// Number of trace intervals covering `span` seconds; span must be a multiple of dt.
std::size_t intervals(double span, double dt, const char* what) {
  const double ratio = span / dt;
  const double rounded = std::round(ratio);
  require(std::abs(ratio - rounded) <= 1e-6 * std::max(1.0, ratio), ErrorCode::InvalidArgument,
          std::string(what) + " must be a multiple of the trace spacing");
  return static_cast<std::size_t>(rounded);
}

double min_eigenvalue(const Matrix& w) {
  return Eigen::SelfAdjointEigenSolver<Matrix>(w, Eigen::EigenvaluesOnly).eigenvalues()(0);
}

// Sample index range [i0, i0 + m] of a Gramian window; m is even so RK4 steps
// of 2h land on samples.
std::pair<std::size_t, std::size_t> gramian_window(const LtvTrace& trace, double start,
                                                   double window) {
  require(trace.size() >= 3 && trace.dt > 0.0, ErrorCode::WindowTooShort,
          "gramian: trace needs at least three samples");
  require(window > 0.0, ErrorCode::WindowTooShort, "gramian: window must be positive");
  require(start >= trace.t0 - 1e-12, ErrorCode::InvalidArgument, "gramian: window starts before the trace");
  const std::size_t i0 = intervals(start - trace.t0, trace.dt, "gramian start");
  const std::size_t m = intervals(window, trace.dt, "gramian window");
  require(m >= 2 && m % 2 == 0, ErrorCode::WindowTooShort,
          "gramian: window must span an even number (>= 2) of trace intervals");
  require(i0 + m < trace.size(), ErrorCode::WindowTooShort,
          "gramian: window extends past the end of the trace");
  return {i0, m};
}

double relative_asymmetry(const Matrix& w) {
  const double scale = w.cwiseAbs().maxCoeff();
  return scale > 0.0 ? (w - w.transpose()).cwiseAbs().maxCoeff() / scale : 0.0;
}

GramianEntry finish_gramian(Matrix w, double start, double window, const char* method) {
  GramianEntry e;
  e.start = start;
  e.window = window;
  e.method = method;
  e.asymmetry = relative_asymmetry(w);
  e.W = 0.5 * (w + w.transpose());
  e.min_eig = min_eigenvalue(e.W);
  return e;
}

// Trapezoid weights at nodes spaced 2h over m / 2 panels.
double trapezoid_weight(std::size_t j, std::size_t panels, double step) {
  return (j == 0 || j == panels) ? 0.5 * step : step;
}

struct ErrorState {
  Matrix3 Rt;  // R~
  Vector3 pt;  // p~
  Matrix3 R;   // body attitude
};

ErrorState operator+(const ErrorState& a, const ErrorState& b) {
  return {a.Rt + b.Rt, a.pt + b.pt, a.R + b.R};
}
ErrorState operator*(double s, const ErrorState& a) { return {s * a.Rt, s * a.pt, s * a.R}; }

}  // namespace

LtvTrace record_trace(const TrajectorySpec& spec, const CameraRig& rig, const LandmarkMap& map,
                      double sim_dt, double horizon, std::size_t stride) {
  require(sim_dt > 0.0 && horizon >= 0.0 && stride >= 1, ErrorCode::InvalidArgument,
          "record_trace: need sim_dt > 0, horizon >= 0, stride >= 1");
  rig.validate();
  map.validate();
  const std::size_t steps = intervals(horizon, sim_dt, "record_trace horizon");
  const auto states = simulate_truth(spec, sim_dt, steps);

  LtvTrace trace;
  trace.t0 = 0.0;
  trace.dt = sim_dt * static_cast<double>(stride);
  trace.landmarks = map.size();
  for (std::size_t k = 0; k < states.size(); k += stride) {
    const RigidBodyState& s = states[k];
    const BearingSample b = measure(rig, map, s);
    std::vector<UnitVector3> inertial(map.size());
    for (std::size_t i = 0; i < map.size(); ++i) {
      inertial[i] = s.R * rig.R_c * b.bearings[i];
    }
    trace.omega.push_back(spec.angular_velocity(s.t));
    trace.attitude.push_back(s.R);
    trace.projectors.push_back(b.projectors);
    trace.inertial_bearings.push_back(std::move(inertial));
  }
  return trace;
}

bool PeReport::all_pass() const {
  return std::all_of(landmarks.begin(), landmarks.end(), [](const auto& l) { return l.pass; });
}

PeReport pe_check(const std::vector<std::vector<UnitVector3>>& bearings, double dt, double window,
                  double mu_o, double window_step) {
  require(dt > 0.0 && window_step > 0.0, ErrorCode::InvalidArgument,
          "pe_check: dt and window step must be positive");
  require(window >= 2.0 * dt - 1e-12 * dt, ErrorCode::WindowTooShort,
          "pe_check: window shorter than two samples");
  const std::size_t m = intervals(window, dt, "pe_check window");
  require(!bearings.empty() && m < bearings.size(), ErrorCode::WindowTooShort,
          "pe_check: window longer than the trace");
  const std::size_t n = bearings.front().size();
  const std::size_t samples = bearings.size();

  PeReport report;
  report.window = window;
  report.mu_o = mu_o;
  const double horizon = static_cast<double>(samples - 1) * dt;
  for (std::size_t i = 0; i < n; ++i) {
    // Cumulative trapezoid of pi(z'_i); window integrals are differences.
    std::vector<Matrix3> cumulative(samples, Matrix3::Zero());
    Matrix3 prev = proj(bearings[0].at(i));
    for (std::size_t k = 1; k < samples; ++k) {
      const Matrix3 cur = proj(bearings[k].at(i));
      cumulative[k] = cumulative[k - 1] + 0.5 * dt * (prev + cur);
      prev = cur;
    }
    PeLandmarkReport lr;
    lr.landmark = i;
    lr.worst_min_eig = std::numeric_limits<double>::infinity();
    for (std::size_t w = 0;; ++w) {
      const double start = static_cast<double>(w) * window_step;
      if (start + window > horizon + 1e-9 * dt) {
        break;
      }
      const auto k0 = static_cast<std::size_t>(std::llround(start / dt));
      const Matrix3 integral = cumulative[k0 + m] - cumulative[k0];
      const double e = Eigen::SelfAdjointEigenSolver<Matrix3>(integral, Eigen::EigenvaluesOnly).eigenvalues()(0);
      lr.windows.push_back({start, e});
      lr.worst_min_eig = std::min(lr.worst_min_eig, e);
    }
    lr.pass = lr.worst_min_eig > mu_o;
    report.landmarks.push_back(std::move(lr));
  }
  return report;
}

Matrix transition_matrix(std::span<const Matrix> A_samples, double h, std::size_t i0, std::size_t i1) {
  require(i1 >= i0 && (i1 - i0) % 2 == 0, ErrorCode::InvalidArgument,
          "transition_matrix: need i1 >= i0 with an even number of intervals");
  require(i1 < A_samples.size(), ErrorCode::DimensionMismatch,
          "transition_matrix: sample range exceeds the trace");
  const Eigen::Index n = A_samples[i0].rows();
  Matrix phi = Matrix::Identity(n, n);
  static constexpr std::array<std::size_t, 4> kOffset{0, 1, 1, 2};
  for (std::size_t k = i0; k < i1; k += 2) {
    phi = rk4_step(phi, 2.0 * h, [&](int stage, const Matrix& x) -> Matrix {
      return A_samples[k + kOffset[static_cast<std::size_t>(stage)]] * x;
    });
  }
  return phi;
}

GramianEntry gramian_direct(const LtvTrace& trace, double start, double window) {
  const auto [i0, m] = gramian_window(trace, start, window);
  const std::size_t n = trace.landmarks;
  const auto dim = static_cast<Eigen::Index>(3 * n + 6);
  const double h = trace.dt;
  const std::size_t panels = m / 2;
  static constexpr std::array<std::size_t, 4> kOffset{0, 1, 1, 2};

  Matrix phi = Matrix::Identity(dim, dim);
  Matrix w = Matrix::Zero(dim, dim);
  Matrix cphi(3 * n, dim);
  for (std::size_t j = 0;; ++j) {
    const std::size_t k = i0 + 2 * j;
    const auto& pis = trace.projectors[k];
    for (std::size_t i = 0; i < n; ++i) {
      cphi.middleRows<3>(3 * i).noalias() = pis[i] * phi.middleRows<3>(3 * i);
    }
    w.noalias() += trapezoid_weight(j, panels, 2.0 * h) * (cphi.transpose() * cphi);
    if (j == panels) {
      break;
    }
    phi = rk4_step(phi, 2.0 * h, [&](int stage, const Matrix& x) -> Matrix {
      return apply_system(trace.omega[k + kOffset[static_cast<std::size_t>(stage)]], x, n);
    });
  }
  return finish_gramian(w / window, start, window, "direct");
}

GramianEntry gramian_direct(std::span<const Matrix> A_samples, std::span<const Matrix> C_samples, double h,
                            std::size_t i0, std::size_t m) {
  require(h > 0.0 && m >= 2 && m % 2 == 0, ErrorCode::WindowTooShort,
          "gramian: window must span an even number (>= 2) of samples");
  require(A_samples.size() == C_samples.size() && i0 + m < A_samples.size(), ErrorCode::DimensionMismatch,
          "gramian: samples do not cover the window");
  const std::size_t panels = m / 2;
  const Eigen::Index n = A_samples[i0].rows();
  Matrix phi = Matrix::Identity(n, n);
  Matrix w = Matrix::Zero(phi.rows(), phi.cols());
  for (std::size_t j = 0;; ++j) {
    const std::size_t k = i0 + 2 * j;
    const Matrix cphi = C_samples[k] * phi;
    w.noalias() += trapezoid_weight(j, panels, 2.0 * h) * (cphi.transpose() * cphi);
    if (j == panels) {
      break;
    }
    phi = transition_matrix(A_samples, h, k, k + 2) * phi;
  }
  const double window = static_cast<double>(m) * h;
  return finish_gramian(w / window, static_cast<double>(i0) * h, window, "direct");
}

Matrix nilpotent_coupling(std::size_t landmarks) {
  const auto n = static_cast<Eigen::Index>(landmarks);
  Matrix abar = Matrix::Zero(3 * n + 6, 3 * n + 6);
  for (Eigen::Index i = 0; i < n; ++i) {
    abar.block<3, 3>(3 * i, 3 * n) = -Matrix3::Identity();
  }
  abar.block<3, 3>(3 * n, 3 * n + 3) = Matrix3::Identity();
  return abar;
}

Matrix nilpotent_exp(const Matrix& abar, double s) {
  const Matrix a2 = abar * abar;
  return Matrix::Identity(abar.rows(), abar.cols()) + s * abar + (0.5 * s * s) * a2;
}

Matrix block_rotation(const Matrix3& R, std::size_t blocks) {
  const auto b = static_cast<Eigen::Index>(blocks);
  Matrix t = Matrix::Zero(3 * b, 3 * b);
  for (Eigen::Index i = 0; i < b; ++i) {
    t.block<3, 3>(3 * i, 3 * i) = R;
  }
  return t;
}

GramianEntry gramian_factored(const LtvTrace& trace, double start, double window) {
  const auto [i0, m] = gramian_window(trace, start, window);
  const std::size_t n = trace.landmarks;
  const auto dim = static_cast<Eigen::Index>(3 * n + 6);
  const double h = trace.dt;
  const std::size_t panels = m / 2;
  const Matrix abar = nilpotent_coupling(n);
  const Matrix abar2 = abar * abar;
  const Matrix eye = Matrix::Identity(dim, dim);

  Matrix wbar = Matrix::Zero(dim, dim);
  Matrix e(3 * n, dim);
  for (std::size_t j = 0; j <= panels; ++j) {
    const std::size_t k = i0 + 2 * j;
    const double s = static_cast<double>(2 * j) * h;
    // C-bar = [I 0 0] keeps the landmark rows of exp(Abar s).
    const Matrix phibar = eye + s * abar + (0.5 * s * s) * abar2;
    for (std::size_t i = 0; i < n; ++i) {
      e.middleRows<3>(3 * i).noalias() =
          proj(trace.inertial_bearings[k][i]) * phibar.middleRows<3>(3 * i);
    }
    wbar.noalias() += trapezoid_weight(j, panels, 2.0 * h) * (e.transpose() * e);
  }
  const Matrix t = block_rotation(trace.attitude[i0].transpose(), n + 2);
  const Matrix w = t * wbar * t.transpose();
  return finish_gramian(w / window, start, window, "factored");
}

double ExponentialFit::envelope(double t) const { return prefactor * std::exp(-rate * t); }

bool ExponentialFit::dominates(std::span<const double> times, std::span<const double> values) const {
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (times[k] < t_start || times[k] > t_end) {
      continue;
    }
    if (values[k] > envelope(times[k]) * (1.0 + 1e-12)) {
      return false;
    }
  }
  return true;
}

ExponentialFit fit_exponential(std::span<const double> times, std::span<const double> values,
                               double t_start, double t_end) {
  require(times.size() == values.size(), ErrorCode::DimensionMismatch,
          "fit_exponential: times and values differ in length");
  require(t_end > t_start, ErrorCode::InvalidArgument, "fit_exponential: empty fit window");
  double st = 0.0, sy = 0.0, stt = 0.0, sty = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (times[k] < t_start || times[k] > t_end) {
      continue;
    }
    require(values[k] > 0.0 && std::isfinite(values[k]), ErrorCode::NonPositiveTrace,
            "fit_exponential: non-positive sample at t = " + std::to_string(times[k]));
    const double y = std::log(values[k]);
    st += times[k];
    sy += y;
    stt += times[k] * times[k];
    sty += times[k] * y;
    ++count;
  }
  require(count >= 2, ErrorCode::InvalidArgument, "fit_exponential: fewer than two samples in the window");
  const double c = static_cast<double>(count);
  const double denom = c * stt - st * st;
  require(denom > 0.0, ErrorCode::InvalidArgument, "fit_exponential: degenerate time samples");
  const double slope = (c * sty - st * sy) / denom;
  const double intercept = (sy - slope * st) / c;

  ExponentialFit fit;
  fit.rate = -slope;
  fit.fit_prefactor = std::exp(intercept);
  fit.t_start = t_start;
  fit.t_end = t_end;
  fit.samples = count;
  double ss = 0.0;
  double log_alpha = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (times[k] < t_start || times[k] > t_end) {
      continue;
    }
    const double y = std::log(values[k]);
    const double r = y - (intercept + slope * times[k]);
    ss += r * r;
    log_alpha = std::max(log_alpha, y + fit.rate * times[k]);
  }
  fit.residual = std::sqrt(ss / c);
  fit.prefactor = std::exp(log_alpha);
  return fit;
}

Matrix gamma_attitude(const AnchorSet& anchors, const PoseGains& gains, const Matrix3& Rhat,
                      std::size_t landmarks) {
  require(anchors.size() <= landmarks, ErrorCode::DimensionMismatch,
          "gamma_attitude: more anchors than landmarks");
  Matrix g = Matrix::Zero(3, static_cast<Eigen::Index>(3 * landmarks + 6));
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    g.middleCols<3>(static_cast<Eigen::Index>(3 * i)) =
        -0.5 * gains.k_R * anchors.weights[i] * skew(anchors.offsets[i]) * Rhat;
  }
  return g;
}

Matrix gamma_position(const AnchorSet& anchors, const PoseGains& gains, const Matrix3& R,
                      std::size_t landmarks) {
  require(anchors.size() <= landmarks, ErrorCode::DimensionMismatch,
          "gamma_position: more anchors than landmarks");
  Matrix g = Matrix::Zero(3, static_cast<Eigen::Index>(3 * landmarks + 6));
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    g.middleCols<3>(static_cast<Eigen::Index>(3 * i)) = -gains.k_p * anchors.weights[i] * R;
  }
  g.middleCols<3>(static_cast<Eigen::Index>(3 * landmarks)) = R;
  return g;
}

double gamma_attitude_norm(const AnchorSet& anchors, const PoseGains& gains) {
  double s = 0.0;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    s += 2.0 * anchors.weights[i] * anchors.weights[i] * anchors.offsets[i].squaredNorm();
  }
  return 0.5 * gains.k_R * std::sqrt(s);
}

double gamma_position_norm(const AnchorSet& anchors, const PoseGains& gains) {
  double s = 0.0;
  for (double w : anchors.weights) {
    s += w * w;
  }
  return std::sqrt(3.0 * (gains.k_p * gains.k_p * s + 1.0));
}

double zero_input_lyapunov(const AnchorSet& anchors, const PoseError& err) {
  return (anchors.M * (Matrix3::Identity() - err.R)).trace() + 0.5 * err.p.squaredNorm();
}

ErrorSystemRate pose_error_rate(const AnchorSet& anchors, const PoseGains& gains,
                                const PoseError& err, const Matrix3& R, const Vector& xtilde) {
  const auto landmarks = static_cast<std::size_t>((xtilde.size() - 6) / 3);
  const Matrix3 Rhat = err.R.transpose() * R;
  const Vector3 u = -gains.k_R * psi(anchors.M * err.R) +
                    gamma_attitude(anchors, gains, Rhat, landmarks) * xtilde;
  return {err.R * skew(u), -gains.k_p * err.p + gamma_position(anchors, gains, R, landmarks) * xtilde};
}

std::vector<IssOutcome> iss_experiment(const AnchorSet& anchors, const PoseGains& gains,
                                       std::size_t landmarks, const ErrorDriver& driver,
                                       std::span<const PoseError> initial,
                                       const TrajectorySpec& trajectory, const IssOptions& options) {
  gains.validate();
  require(options.dt > 0.0 && options.horizon >= 0.0, ErrorCode::InvalidArgument,
          "iss_experiment: need dt > 0 and horizon >= 0");
  const std::size_t steps = intervals(options.horizon, options.dt, "iss horizon");
  const auto dim = static_cast<Eigen::Index>(3 * landmarks + 6);

  std::vector<IssOutcome> out;
  out.reserve(initial.size());
  for (const PoseError& e0 : initial) {
    IssOutcome o;
    o.initial = e0;
    ErrorState s{e0.R, e0.p, trajectory.initial_attitude};
    o.max_psi = psi(anchors.M * s.Rt).norm();
    for (std::size_t k = 0; k < steps; ++k) {
      const double t = static_cast<double>(k) * options.dt;
      s = rk4_step(s, options.dt, [&](int stage, const ErrorState& x) {
        const double ts = t + kRk4Nodes[static_cast<std::size_t>(stage)] * options.dt;
        const Vector xt = driver(ts);
        require(xt.size() == dim, ErrorCode::DimensionMismatch, "iss_experiment: driver dimension");
        const ErrorSystemRate r = pose_error_rate(anchors, gains, {x.Rt, x.pt}, x.R, xt);
        return ErrorState{r.R, r.p, x.R * skew(trajectory.angular_velocity(ts))};
      });
      s.Rt = orthonormalize(s.Rt);
      s.R = orthonormalize(s.R);
      require(s.Rt.allFinite() && s.pt.allFinite(), ErrorCode::NonFinite,
              "iss_experiment: integration diverged");
      o.max_psi = std::max(o.max_psi, psi(anchors.M * s.Rt).norm());
    }
    o.terminal = {s.Rt, s.pt};
    o.terminal_W = ultimate_bound_monitor(o.terminal);
    out.push_back(o);
  }
  return out;
}

namespace {

// exp(pi e_k^) = 2 e_k e_k^T - I, exactly.
Matrix3 half_turn_about_axis(std::size_t k) {
  Matrix3 d = -Matrix3::Identity();
  d(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) = 1.0;
  return d;
}

}  // namespace

Matrix3 undesired_equilibrium(const AnchorSet& anchors, std::size_t eigen_index) {
  require(eigen_index < 3, ErrorCode::InvalidArgument, "undesired_equilibrium: index must be 0, 1 or 2");
  const Matrix3& u = anchors.m_eigenvectors;
  return u * half_turn_about_axis(eigen_index) * u.transpose();
}

IssOutcome undesired_equilibrium_experiment(const AnchorSet& anchors, const PoseGains& gains,
                                            std::size_t eigen_index, const Vector3& perturbation,
                                            const IssOptions& options) {
  gains.validate();
  require(eigen_index < 3, ErrorCode::InvalidArgument,
          "undesired_equilibrium_experiment: index must be 0, 1 or 2");
  require(options.dt > 0.0 && options.horizon >= 0.0, ErrorCode::InvalidArgument,
          "undesired_equilibrium_experiment: need dt > 0 and horizon >= 0");
  const std::size_t steps = intervals(options.horizon, options.dt, "equilibrium horizon");
  const Matrix3& u = anchors.m_eigenvectors;
  const Matrix3 d = anchors.m_eigenvalues.asDiagonal();

  // psi(U A U^T) = U psi(A) for U in SO(3), so the dynamics of U^T R~ U are
  // those of R~ with M replaced by its diagonal form.
  Matrix3 rt = half_turn_about_axis(eigen_index);
  if (perturbation.norm() > 0.0) {
    rt = rt * exp_so3(u.transpose() * perturbation);
  }
  Vector3 pt = Vector3::Zero();

  IssOutcome o;
  o.initial = {u * rt * u.transpose(), pt};
  o.max_psi = psi(d * rt).norm();
  for (std::size_t k = 0; k < steps; ++k) {
    const ErrorState next = rk4_step(ErrorState{rt, pt, Matrix3::Zero()}, options.dt,
                                     [&](int, const ErrorState& x) {
                                       return ErrorState{x.Rt * skew(-gains.k_R * psi(d * x.Rt)),
                                                         -gains.k_p * x.pt, Matrix3::Zero()};
                                     });
    rt = orthonormalize(next.Rt);
    pt = next.pt;
    require(rt.allFinite() && pt.allFinite(), ErrorCode::NonFinite,
            "undesired_equilibrium_experiment: integration diverged");
    o.max_psi = std::max(o.max_psi, psi(d * rt).norm());
  }
  o.terminal = {u * rt * u.transpose(), pt};
  o.terminal_W = ultimate_bound_monitor(o.terminal);
  return o;
}

}  // namespace casnav
