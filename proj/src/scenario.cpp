#include "casnav/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <limits>
#include <numbers>
#include <thread>

#include <Eigen/Cholesky>

#include "casnav/error.hpp"

namespace casnav {
namespace {

class CsvWriter {
 public:
  CsvWriter() = default;
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header) {
    out_.open(path);
    if (!out_) {
      throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
    }
    out_ << std::setprecision(17);
    for (std::size_t i = 0; i < header.size(); ++i) {
      out_ << (i ? "," : "") << header[i];
    }
    out_ << "\n";
  }

  bool is_open() const { return out_.is_open(); }

  CsvWriter& operator<<(double x) {
    sep();
    out_ << x;
    return *this;
  }
  CsvWriter& operator<<(const std::string& s) {
    sep();
    out_ << s;
    return *this;
  }
  CsvWriter& operator<<(const Vector3& v) { return *this << v(0) << v(1) << v(2); }
  CsvWriter& operator<<(const Matrix3& m) {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        *this << m(r, c);
      }
    }
    return *this;
  }
  void end_row() {
    out_ << "\n";
    first_ = true;
  }

 private:
  void sep() {
    if (!first_) out_ << ",";
    first_ = false;
  }
  std::ofstream out_;
  bool first_ = true;
};

std::vector<std::string> with_prefix(const std::string& p, std::initializer_list<const char*> names) {
  std::vector<std::string> out;
  for (const char* n : names) out.push_back(p + n);
  return out;
}

void append(std::vector<std::string>& a, const std::vector<std::string>& b) { a.insert(a.end(), b.begin(), b.end()); }

const std::initializer_list<const char*> kMatrixCols{"00", "01", "02", "10", "11", "12", "20", "21", "22"};
const std::initializer_list<const char*> kVectorCols{"_x", "_y", "_z"};

std::vector<std::string> truth_header() {
  std::vector<std::string> h{"t"};
  append(h, with_prefix("R", kMatrixCols));
  append(h, with_prefix("p", kVectorCols));
  append(h, with_prefix("v", kVectorCols));
  return h;
}

std::vector<std::string> ltv_header(std::size_t n) {
  std::vector<std::string> h{"t"};
  for (std::size_t i = 0; i < n; ++i) {
    append(h, with_prefix("bp" + std::to_string(i + 1), kVectorCols));
  }
  append(h, with_prefix("v", kVectorCols));
  append(h, with_prefix("eta", kVectorCols));
  append(h, {"xtilde_norm", "v_err", "landmark_err_max", "eta_err", "p_min_eig", "p_max_eig", "lyapunov"});
  return h;
}

std::vector<std::string> pose_header() {
  std::vector<std::string> h{"t"};
  append(h, with_prefix("Rhat", kMatrixCols));
  append(h, with_prefix("phat", kVectorCols));
  append(h, {"att_dist", "ptilde_norm", "pos_err", "gravity_err", "W", "mapped_unknown_err_max"});
  return h;
}

std::vector<std::string> landmark_header() {
  return {"id", "known", "true_x", "true_y", "true_z", "est_x", "est_y", "est_z", "err"};
}

ExtendedState initial_estimate(const ScenarioConfig& cfg, std::size_t n) {
  ExtendedState x(n);
  for (std::size_t i = 0; i < n; ++i) x.landmark(i) = cfg.init_landmark;
  x.velocity() = cfg.init_velocity;
  x.gravity() = cfg.init_gravity;
  return x;
}

LandmarkMap checked_map(const ScenarioConfig& cfg) {
  cfg.validate();
  return cfg.landmark_map();
}

std::size_t step_count(const ScenarioConfig& cfg) {
  return static_cast<std::size_t>(std::llround(cfg.horizon / cfg.dt));
}

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

}  // namespace

Scenario::Scenario(const ScenarioConfig& cfg)
    : cfg_(cfg),
      spec_(cfg.trajectory_spec()),
      rig_(cfg.rig()),
      map_(checked_map(cfg)),
      anchors_(cfg.anchors(map_)),
      gains_(cfg.gains()),
      measure_opts_{cfg.fov_half_angle},
      truth_(initial_state(spec_)),
      ltv_(RiccatiConfig::isotropic(map_.size(), cfg.q, cfg.v, cfg.p0), initial_estimate(cfg, map_.size()),
           cfg.check_every),
      pose_(cfg.initial_pose()),
      total_steps_(step_count(cfg)) {
  gains_.validate();
  current_ = measure_at(truth_);
  record_.dt = cfg_.dt;
  const Vector x0 = ltv_.estimate().x;
  stages_ = {x0, x0, x0, x0};
}

LtvMeasurement Scenario::measure_at(const RigidBodyState& s) const {
  return make_measurement(synthesize_imu(spec_, s), measure(rig_, map_, s, measure_opts_));
}

void Scenario::step() {
  if (done()) {
    return;
  }
  const double dt = cfg_.dt;
  const double t0 = static_cast<double>(k_) * dt;
  const ImuModel imu = [this](const RigidBodyState& s) { return synthesize_imu(spec_, s); };
  RigidBodyState mid = step_truth(truth_, imu, spec_.gravity, 0.5 * dt);
  mid.t = t0 + 0.5 * dt;
  RigidBodyState end = step_truth(mid, imu, spec_.gravity, 0.5 * dt);
  end.t = static_cast<double>(k_ + 1) * dt;
  const LtvMeasurement m_mid = measure_at(mid);
  LtvMeasurement m_end = measure_at(end);

  stages_ = ltv_.step(current_, m_mid, m_end, dt);
  const PoseStageInputs inputs = pose_inputs(
      stages_, {current_.omega, m_mid.omega, m_mid.omega, m_end.omega}, map_.size(), map_.known_count);
  pose_ = pose_step(pose_, inputs, gains_, anchors_, dt);
  if (recording_) {
    record_.inputs.push_back(inputs);
    record_.R.push_back(end.R);
    record_.p.push_back(end.p);
  }
  truth_ = end;
  current_ = std::move(m_end);
  ++k_;
}

Vector Scenario::true_state() const { return ExtendedState::from_truth(truth_, map_, spec_.gravity).x; }

CascadeErrors Scenario::errors() const {
  const std::size_t n = map_.size();
  const ExtendedState truth_x = ExtendedState::from_truth(truth_, map_, spec_.gravity);
  const ExtendedState& est = ltv_.estimate();
  CascadeErrors e;
  e.t = truth_.t;
  e.xtilde = (truth_x.x - est.x).norm();
  e.velocity = (truth_x.velocity() - est.velocity()).norm();
  e.eta = (truth_x.gravity() - est.gravity()).norm();
  for (std::size_t i = 0; i < n; ++i) {
    e.landmark_max = std::max(e.landmark_max, (truth_x.landmark(i) - est.landmark(i)).norm());
  }
  e.gravity = (pose_.R * est.gravity() - spec_.gravity).norm();
  const PoseError pe = pose_error(truth_.R, truth_.p, pose_, anchors_);
  e.attitude = attitude_distance(pe.R);
  e.ptilde = pe.p.norm();
  e.position = (pose_.p - truth_.p).norm();
  e.W = ultimate_bound_monitor(pe);
  for (std::size_t i = map_.known_count; i < n; ++i) {
    const Vector3 mapped = pose_.R * est.landmark(i) + pose_.p;
    e.mapped_unknown_max = std::max(e.mapped_unknown_max, (mapped - map_.positions[i]).norm());
  }
  return e;
}

RunResult run_scenario(const ScenarioConfig& cfg, const RunOptions& options) {
  Scenario sc(cfg);
  sc.record_cascade(options.record_cascade);
  const std::size_t n = sc.map().size();

  CsvWriter truth_csv, ltv_csv, pose_csv;
  const bool write = !options.out_dir.empty();
  const std::filesystem::path dir(options.out_dir);
  if (write) {
    std::filesystem::create_directories(dir);
    truth_csv = CsvWriter(dir / "truth.csv", truth_header());
    ltv_csv = CsvWriter(dir / "ltv.csv", ltv_header(n));
    pose_csv = CsvWriter(dir / "pose.csv", pose_header());
  }

  RunSummary summary;
  summary.min_p_eigenvalue = std::numeric_limits<double>::infinity();
  const std::size_t total = sc.total_steps();
  summary.times.reserve(total + 1);
  summary.xtilde.reserve(total + 1);
  summary.lyapunov.reserve(total + 1);

  const auto observe = [&](bool output_row) {
    const Matrix& P = sc.ltv().riccati().P;
    const Vector xt = sc.true_state() - sc.ltv().estimate().x;
    const Eigen::LLT<Matrix> llt(P);
    if (llt.info() != Eigen::Success) {
      throw Error(ErrorCode::LostPositivity, "run: P not positive definite at t=" + std::to_string(sc.time()));
    }
    const double V = xt.dot(llt.solve(xt));
    if (!summary.lyapunov.empty() && summary.lyapunov.back() > 0.0) {
      summary.max_lyapunov_increase =
          std::max(summary.max_lyapunov_increase, (V - summary.lyapunov.back()) / summary.lyapunov.back());
    }
    summary.times.push_back(sc.time());
    summary.xtilde.push_back(xt.norm());
    summary.lyapunov.push_back(V);
    summary.max_p_asymmetry = std::max(summary.max_p_asymmetry, (P - P.transpose()).cwiseAbs().maxCoeff());
    if (!output_row) {
      return;
    }
    SpectrumBounds sb{nan(), nan()};
    if (options.track_spectrum) {
      sb = spectrum_bounds(P);
      summary.min_p_eigenvalue = std::min(summary.min_p_eigenvalue, sb.min);
    }
    if (!write) {
      return;
    }
    const CascadeErrors e = sc.errors();
    const RigidBodyState& s = sc.truth();
    truth_csv << s.t << s.R << s.p << s.v;
    truth_csv.end_row();
    const ExtendedState& est = sc.ltv().estimate();
    ltv_csv << s.t;
    for (std::size_t i = 0; i < n; ++i) ltv_csv << Vector3(est.landmark(i));
    ltv_csv << Vector3(est.velocity()) << Vector3(est.gravity()) << e.xtilde << e.velocity << e.landmark_max
            << e.eta << sb.min << sb.max << V;
    ltv_csv.end_row();
    pose_csv << s.t << sc.pose().R << sc.pose().p << e.attitude << e.ptilde << e.position << e.gravity << e.W
             << e.mapped_unknown_max;
    pose_csv.end_row();
  };

  const std::size_t stride = cfg.output_stride;
  if (total > 0) {
    observe(true);
  }
  while (!sc.done()) {
    sc.step();
    observe(sc.steps_done() % stride == 0 || sc.done());
  }

  summary.steps = total;
  summary.terminal = sc.errors();
  if (!std::isfinite(summary.min_p_eigenvalue)) {
    summary.min_p_eigenvalue = nan();
  }
  const double fit_end = std::min(cfg.fit_end, cfg.horizon);
  if (fit_end > cfg.fit_start) {
    const auto count = std::count_if(summary.times.begin(), summary.times.end(),
                                     [&](double t) { return t >= cfg.fit_start && t <= fit_end; });
    if (count >= 2) {
      summary.fit = fit_exponential(summary.times, summary.xtilde, cfg.fit_start, fit_end);
    }
  }

  if (write) {
    CsvWriter lm(dir / "landmarks.csv", landmark_header());
    if (total > 0) {
      const ExtendedState& est = sc.ltv().estimate();
      for (std::size_t i = 0; i < n; ++i) {
        const Vector3 mapped = sc.pose().R * est.landmark(i) + sc.pose().p;
        lm << static_cast<double>(i + 1) << (i < sc.map().known_count ? 1.0 : 0.0) << sc.map().positions[i]
           << mapped << (mapped - sc.map().positions[i]).norm();
        lm.end_row();
      }
    }
  }

  RunResult r;
  r.summary = std::move(summary);
  r.cascade = sc.cascade();
  r.anchors = sc.anchors();
  r.map = sc.map();
  r.ltv_estimate = sc.ltv().estimate();
  r.pose = sc.pose();
  r.truth = sc.truth();
  return r;
}

ReplayResult replay_pose(const CascadeRecord& record, const AnchorSet& anchors, const PoseGains& gains,
                         const PoseEstimate& initial) {
  gains.validate();
  ReplayResult r;
  r.pose = initial;
  for (const PoseStageInputs& in : record.inputs) {
    r.pose = pose_step(r.pose, in, gains, anchors, record.dt);
  }
  if (record.inputs.empty()) {
    return r;
  }
  r.error = pose_error(record.R.back(), record.p.back(), r.pose, anchors);
  r.attitude = attitude_distance(r.error.R);
  r.ptilde = r.error.p.norm();
  r.position = (r.pose.p - record.p.back()).norm();
  r.W = ultimate_bound_monitor(r.error);
  return r;
}

PoseEstimate antipodal_initial_pose(const AnchorSet& anchors, std::size_t eigen_index, const Matrix3& R0,
                                    const Vector3& p0) {
  const Matrix3 rt = undesired_equilibrium(anchors, eigen_index);
  // R~ = R R_hat^T and p~ = p - R~ p_hat - (I - R~) p_o = 0.
  PoseEstimate e;
  e.R = rt.transpose() * R0;
  e.p = rt.transpose() * (p0 - (Matrix3::Identity() - rt) * anchors.center);
  return e;
}

ObservabilityResult check_observability(const ScenarioConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  const LandmarkMap map = cfg.landmark_map();
  const LtvTrace trace = record_trace(cfg.trajectory_spec(), cfg.rig(), map, cfg.dt, cfg.horizon, cfg.sample_stride);
  if (cfg.window > cfg.horizon) {
    throw Error(ErrorCode::WindowTooShort, "check-observability: window " + std::to_string(cfg.window) +
                                               " s is longer than the horizon " + std::to_string(cfg.horizon) + " s");
  }

  ObservabilityResult r;
  r.pe = pe_check(trace.inertial_bearings, trace.dt, cfg.window, cfg.mu_o, cfg.window_step);
  const double horizon = static_cast<double>(trace.size() - 1) * trace.dt;
  r.observable = true;
  for (std::size_t w = 0;; ++w) {
    const double start = static_cast<double>(w) * cfg.window_step;
    if (start + cfg.window > horizon + 1e-9 * trace.dt) {
      break;
    }
    GramianEntry d = gramian_direct(trace, start, cfg.window);
    GramianEntry f = gramian_factored(trace, start, cfg.window);
    r.relative_difference.push_back((f.W - d.W).norm() / d.W.norm());
    r.observable = r.observable && d.min_eig > 0.0;
    d.W.resize(0, 0);
    f.W.resize(0, 0);
    r.direct.push_back(std::move(d));
    r.factored.push_back(std::move(f));
  }

  if (!out_dir.empty()) {
    const std::filesystem::path dir(out_dir);
    std::filesystem::create_directories(dir);
    CsvWriter pe(dir / "pe.csv", {"landmark", "window_start", "window", "min_eig", "mu_o", "pass"});
    for (const auto& l : r.pe.landmarks) {
      for (const auto& w : l.windows) {
        pe << static_cast<double>(l.landmark + 1) << w.start << r.pe.window << w.min_eig << r.pe.mu_o
           << (w.min_eig > r.pe.mu_o ? 1.0 : 0.0);
        pe.end_row();
      }
    }
    CsvWriter g(dir / "gramian.csv", {"window_start", "window", "method", "min_eig", "asymmetry", "rel_diff"});
    for (std::size_t k = 0; k < r.direct.size(); ++k) {
      for (const GramianEntry* e : {&r.direct[k], &r.factored[k]}) {
        g << e->start << e->window << e->method << e->min_eig << e->asymmetry << r.relative_difference[k];
        g.end_row();
      }
    }
  }
  return r;
}

const std::vector<std::string>& sweep_parameters() {
  static const std::vector<std::string> names{"k_R", "k_p", "dt", "init_angle", "q_scale", "v_scale"};
  return names;
}

namespace {

bool is_converged(double attitude, double position) { return attitude < 1e-3 && position < 1e-2; }

SweepRow row_from_run(const std::string& parameter, double value, const RunSummary& s) {
  SweepRow row;
  row.parameter = parameter;
  row.value = value;
  row.attitude = s.terminal.attitude;
  row.ptilde = s.terminal.ptilde;
  row.xtilde = s.terminal.xtilde;
  row.position = s.terminal.position;
  row.rate = s.fit ? s.fit->rate : nan();
  row.converged = is_converged(row.attitude, row.position);
  return row;
}

// Runs f(i) for i in [0, count) on up to hardware_concurrency workers; results
// keep index order.
template <class F>
auto fan_out(std::size_t count, F f) -> std::vector<decltype(f(std::size_t{}))> {
  using R = decltype(f(std::size_t{}));
  const std::size_t workers = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  std::vector<R> out;
  out.reserve(count);
  for (std::size_t base = 0; base < count; base += workers) {
    std::vector<std::future<R>> batch;
    for (std::size_t i = base; i < std::min(count, base + workers); ++i) {
      batch.push_back(std::async(workers > 1 ? std::launch::async : std::launch::deferred, f, i));
    }
    for (auto& fu : batch) out.push_back(fu.get());
  }
  return out;
}

}  // namespace

std::vector<SweepRow> sweep(const ScenarioConfig& cfg, const std::string& parameter,
                            const std::vector<double>& values, const std::string& out_dir) {
  const auto& names = sweep_parameters();
  if (std::find(names.begin(), names.end(), parameter) == names.end()) {
    throw Error(ErrorCode::UnknownParameter, "sweep: unknown parameter '" + parameter +
                                                 "' (expected k_R, k_p, dt, init_angle, q_scale or v_scale)");
  }
  if (values.empty()) {
    throw Error(ErrorCode::InvalidArgument, "sweep: no values given");
  }
  cfg.validate();

  std::vector<SweepRow> rows;
  const bool pose_only = parameter == "k_R" || parameter == "k_p" || parameter == "init_angle";
  if (pose_only) {
    RunOptions opts;
    opts.record_cascade = true;
    opts.track_spectrum = false;
    const RunResult base = run_scenario(cfg, opts);
    const double rate = base.summary.fit ? base.summary.fit->rate : nan();
    rows = fan_out(values.size(), [&](std::size_t i) {
      ScenarioConfig c = cfg;
      const double v = values[i];
      if (parameter == "k_R") c.k_R = v;
      if (parameter == "k_p") c.k_p = v;
      if (parameter == "init_angle") c.init_angle = v * std::numbers::pi;
      c.validate();
      SweepRow row;
      row.parameter = parameter;
      row.value = v;
      row.xtilde = base.summary.terminal.xtilde;
      row.rate = rate;
      if (base.cascade.inputs.empty()) {
        const PoseError e = pose_error(base.truth.R, base.truth.p, c.initial_pose(), base.anchors);
        row.attitude = attitude_distance(e.R);
        row.ptilde = e.p.norm();
        row.position = (c.initial_pose().p - base.truth.p).norm();
      } else {
        const ReplayResult rr = replay_pose(base.cascade, base.anchors, c.gains(), c.initial_pose());
        row.attitude = rr.attitude;
        row.ptilde = rr.ptilde;
        row.position = rr.position;
      }
      row.converged = is_converged(row.attitude, row.position);
      return row;
    });
    if (parameter == "init_angle" && !base.cascade.inputs.empty()) {
      const RigidBodyState s0 = initial_state(cfg.trajectory_spec());
      for (std::size_t k = 0; k < 3; ++k) {
        const PoseEstimate init = antipodal_initial_pose(base.anchors, k, s0.R, s0.p);
        const ReplayResult rr = replay_pose(base.cascade, base.anchors, cfg.gains(), init);
        SweepRow row;
        row.parameter = parameter;
        row.value = 1.0;
        row.label = "antipodal_eig" + std::to_string(k);
        row.attitude = rr.attitude;
        row.ptilde = rr.ptilde;
        row.position = rr.position;
        row.xtilde = base.summary.terminal.xtilde;
        row.rate = rate;
        row.converged = is_converged(row.attitude, row.position);
        rows.push_back(row);
      }
    }
  } else {
    rows = fan_out(values.size(), [&](std::size_t i) {
      ScenarioConfig c = cfg;
      const double v = values[i];
      if (parameter == "dt") c.dt = v;
      if (parameter == "q_scale") c.q *= v;
      if (parameter == "v_scale") c.v *= v;
      c.validate();
      RunOptions opts;
      opts.track_spectrum = false;
      return row_from_run(parameter, v, run_scenario(c, opts).summary);
    });
  }

  if (!out_dir.empty()) {
    const std::filesystem::path dir(out_dir);
    std::filesystem::create_directories(dir);
    CsvWriter csv(dir / "summary.csv", {"parameter", "value", "label", "att_dist", "ptilde_norm", "xtilde_norm",
                                        "pos_err", "lambda", "converged"});
    for (const SweepRow& r : rows) {
      csv << r.parameter << r.value << r.label << r.attitude << r.ptilde << r.xtilde << r.position << r.rate
          << (r.converged ? 1.0 : 0.0);
      csv.end_row();
    }
  }
  return rows;
}

}  // namespace casnav
