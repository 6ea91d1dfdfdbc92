#include "casnav/config.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "casnav/error.hpp"

namespace casnav {
namespace {

constexpr double kPi = std::numbers::pi;

[[noreturn]] void bad_value(const std::string& key, const std::string& what) {
  throw Error(ErrorCode::ConfigParse, key + ": " + what);
}

double to_double(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  double x = 0.0;
  if (!(in >> x) || !(in >> std::ws).eof() || !std::isfinite(x)) {
    bad_value(key, "expected a finite number, got '" + text + "'");
  }
  return x;
}

std::vector<double> to_doubles(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  std::vector<double> out;
  std::string token;
  while (in >> token) {
    out.push_back(to_double(key, token));
  }
  return out;
}

Vector3 to_vector3(const std::string& key, const std::string& text) {
  const auto v = to_doubles(key, text);
  if (v.size() != 3) {
    bad_value(key, "expected three numbers, got '" + text + "'");
  }
  return {v[0], v[1], v[2]};
}

std::size_t to_count(const std::string& key, const std::string& text) {
  const double x = to_double(key, text);
  if (x < 0.0 || x != std::floor(x)) {
    bad_value(key, "expected a non-negative integer, got '" + text + "'");
  }
  return static_cast<std::size_t>(x);
}

std::string fmt(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

std::string fmt(const Vector3& v) { return fmt(v(0)) + " " + fmt(v(1)) + " " + fmt(v(2)); }

struct Field {
  std::function<void(ScenarioConfig&, const std::string& key, const std::string&)> set;
  std::function<std::string(const ScenarioConfig&)> get;
};

template <class T>
Field number(T ScenarioConfig::*member) {
  return {[member](ScenarioConfig& c, const std::string& k, const std::string& s) {
            if constexpr (std::is_same_v<T, double>) {
              c.*member = to_double(k, s);
            } else {
              c.*member = static_cast<T>(to_count(k, s));
            }
          },
          [member](const ScenarioConfig& c) {
            if constexpr (std::is_same_v<T, double>) {
              return fmt(c.*member);
            } else {
              return std::to_string(c.*member);
            }
          }};
}

Field vector3(Vector3 ScenarioConfig::*member) {
  return {[member](ScenarioConfig& c, const std::string& k, const std::string& s) { c.*member = to_vector3(k, s); },
          [member](const ScenarioConfig& c) { return fmt(c.*member); }};
}

// Angle written in units of pi.
Field angle(double ScenarioConfig::*member) {
  return {[member](ScenarioConfig& c, const std::string& k, const std::string& s) { c.*member = kPi * to_double(k, s); },
          [member](const ScenarioConfig& c) { return fmt(c.*member / kPi); }};
}

Field text(std::string ScenarioConfig::*member) {
  return {[member](ScenarioConfig& c, const std::string&, const std::string& s) { c.*member = s; },
          [member](const ScenarioConfig& c) { return c.*member; }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> f;
    f["trajectory.type"] = {
        [](ScenarioConfig& c, const std::string& k, const std::string& s) {
          if (s != "figure_eight" && s != "line") {
            bad_value(k, "expected figure_eight or line, got '" + s + "'");
          }
          c.trajectory = s;
        },
        [](const ScenarioConfig& c) { return c.trajectory; }};
    f["trajectory.origin"] = vector3(&ScenarioConfig::line_origin);
    f["trajectory.velocity"] = vector3(&ScenarioConfig::line_velocity);
    f["trajectory.gravity"] = vector3(&ScenarioConfig::gravity);

    f["landmarks.file"] = text(&ScenarioConfig::landmark_file);
    f["landmarks.grid_half_extent"] = number(&ScenarioConfig::grid_half_extent);
    f["landmarks.grid_per_side"] = number(&ScenarioConfig::grid_per_side);
    f["landmarks.known"] = number(&ScenarioConfig::known);

    f["camera.rotation"] = {
        [](ScenarioConfig& c, const std::string& k, const std::string& s) {
          c.camera_rotation = kPi * to_vector3(k, s);
        },
        [](const ScenarioConfig& c) { return fmt(Vector3(c.camera_rotation / kPi)); }};
    f["camera.position"] = vector3(&ScenarioConfig::camera_position);
    f["camera.intrinsics"] = {
        [](ScenarioConfig& c, const std::string& k, const std::string& s) {
          const auto v = to_doubles(k, s);
          if (v.size() != 9) {
            bad_value(k, "expected nine numbers (row major)");
          }
          for (int i = 0; i < 9; ++i) {
            c.intrinsics(i / 3, i % 3) = v[static_cast<std::size_t>(i)];
          }
        },
        [](const ScenarioConfig& c) {
          std::string out;
          for (int i = 0; i < 9; ++i) {
            out += (i ? " " : "") + fmt(c.intrinsics(i / 3, i % 3));
          }
          return out;
        }};
    f["camera.fov_half_angle"] = {
        [](ScenarioConfig& c, const std::string& k, const std::string& s) {
          if (s == "none" || s.empty()) {
            c.fov_half_angle.reset();
          } else {
            c.fov_half_angle = kPi * to_double(k, s);
          }
        },
        [](const ScenarioConfig& c) {
          return c.fov_half_angle ? fmt(*c.fov_half_angle / kPi) : std::string("none");
        }};

    f["ltv.q"] = number(&ScenarioConfig::q);
    f["ltv.v"] = number(&ScenarioConfig::v);
    f["ltv.p0"] = number(&ScenarioConfig::p0);
    f["ltv.check_every"] = number(&ScenarioConfig::check_every);
    f["ltv.init_velocity"] = vector3(&ScenarioConfig::init_velocity);
    f["ltv.init_gravity"] = vector3(&ScenarioConfig::init_gravity);
    f["ltv.init_landmark"] = vector3(&ScenarioConfig::init_landmark);

    f["pose.k_R"] = number(&ScenarioConfig::k_R);
    f["pose.k_p"] = number(&ScenarioConfig::k_p);
    f["pose.weights"] = {
        [](ScenarioConfig& c, const std::string& k, const std::string& s) {
          if (s == "tuned") {
            c.weight_policy = WeightPolicy::Tuned;
            c.weights.clear();
          } else if (s == "uniform") {
            c.weight_policy = WeightPolicy::Uniform;
            c.weights.clear();
          } else {
            c.weight_policy = WeightPolicy::Explicit;
            c.weights = to_doubles(k, s);
            if (c.weights.empty()) {
              bad_value(k, "expected tuned, uniform or a list of weights");
            }
          }
        },
        [](const ScenarioConfig& c) {
          switch (c.weight_policy) {
            case WeightPolicy::Tuned: return std::string("tuned");
            case WeightPolicy::Uniform: return std::string("uniform");
            case WeightPolicy::Explicit: break;
          }
          std::string out;
          for (std::size_t i = 0; i < c.weights.size(); ++i) {
            out += (i ? " " : "") + fmt(c.weights[i]);
          }
          return out;
        }};
    f["pose.init_axis"] = {
        [](ScenarioConfig& c, const std::string& k, const std::string& s) {
          if (s == "random") {
            c.random_axis = true;
            return;
          }
          const Vector3 a = to_vector3(k, s);
          if (!(a.norm() > 0.0)) {
            bad_value(k, "axis must be non-zero");
          }
          c.random_axis = false;
          c.init_axis = a;
        },
        [](const ScenarioConfig& c) { return c.random_axis ? std::string("random") : fmt(c.init_axis); }};
    f["pose.init_angle"] = angle(&ScenarioConfig::init_angle);
    f["pose.init_position"] = vector3(&ScenarioConfig::init_position);

    f["sim.dt"] = number(&ScenarioConfig::dt);
    f["sim.horizon"] = number(&ScenarioConfig::horizon);
    f["sim.output_stride"] = number(&ScenarioConfig::output_stride);
    f["sim.seed"] = {
        [](ScenarioConfig& c, const std::string& k, const std::string& s) {
          try {
            std::size_t used = 0;
            c.seed = std::stoull(s, &used);
            if (used != s.size()) {
              throw std::invalid_argument(s);
            }
          } catch (const std::logic_error&) {
            bad_value(k, "expected an unsigned integer, got '" + s + "'");
          }
        },
        [](const ScenarioConfig& c) { return std::to_string(c.seed); }};

    f["analysis.window"] = number(&ScenarioConfig::window);
    f["analysis.window_step"] = number(&ScenarioConfig::window_step);
    f["analysis.mu_o"] = number(&ScenarioConfig::mu_o);
    f["analysis.sample_stride"] = number(&ScenarioConfig::sample_stride);
    f["analysis.fit_start"] = number(&ScenarioConfig::fit_start);
    f["analysis.fit_end"] = number(&ScenarioConfig::fit_end);
    return f;
  }();
  return table;
}

// Line of `key` inside `[section]`, for diagnostics. 0 when not found.
std::size_t locate(const std::string& raw, const std::string& section, const std::string& key) {
  std::istringstream in(raw);
  std::string line, current;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    if (line[first] == '[') {
      const auto close = line.find(']', first);
      current = line.substr(first + 1, close == std::string::npos ? std::string::npos : close - first - 1);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos || current != section) continue;
    std::string k = line.substr(first, eq - first);
    k.erase(k.find_last_not_of(" \t") + 1);
    if (k == key) return n;
  }
  return 0;
}

void require(bool ok, const std::string& what) {
  if (!ok) {
    throw Error(ErrorCode::InvalidArgument, "config: " + what);
  }
}

}  // namespace

void set_config_value(ScenarioConfig& cfg, const std::string& key, const std::string& value) {
  const auto it = fields().find(key);
  if (it == fields().end()) {
    throw Error(ErrorCode::ConfigParse, key + ": unknown key");
  }
  it->second.set(cfg, key, value);
}

ScenarioConfig parse_config(std::istream& in, const std::string& source) {
  const std::string raw{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  boost::property_tree::ptree tree;
  try {
    std::istringstream text(raw);
    boost::property_tree::ini_parser::read_ini(text, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error(ErrorCode::ConfigParse, source + ":" + std::to_string(e.line()) + ": " + e.message());
  }

  ScenarioConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw Error(ErrorCode::ConfigParse,
                  source + ":" + std::to_string(locate(raw, "", section)) + ": " + section +
                      ": key outside of any section");
    }
    for (const auto& [key, node] : body) {
      const std::string full = section + "." + key;
      try {
        set_config_value(cfg, full, node.get_value<std::string>());
      } catch (const Error& e) {
        throw Error(ErrorCode::ConfigParse,
                    source + ":" + std::to_string(locate(raw, section, key)) + ": [" + section + "] " +
                        e.what());
      }
    }
  }
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigParse, source + ": " + e.what());
  }
  return cfg;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::Io, "cannot open config file '" + path + "'");
  }
  ScenarioConfig cfg = parse_config(in, path);
  cfg.base_dir = std::filesystem::path(path).parent_path().string();
  return cfg;
}

std::string to_ini(const ScenarioConfig& cfg) {
  std::ostringstream out;
  std::string section;
  for (const auto& [key, field] : fields()) {
    const auto dot = key.find('.');
    const std::string s = key.substr(0, dot);
    if (s != section) {
      out << (section.empty() ? "" : "\n") << "[" << s << "]\n";
      section = s;
    }
    out << key.substr(dot + 1) << " = " << field.get(cfg) << "\n";
  }
  return out.str();
}

void ScenarioConfig::validate() const {
  require(trajectory == "figure_eight" || trajectory == "line",
          "trajectory.type must be figure_eight or line, got '" + trajectory + "'");
  require(dt > 0.0, "sim.dt must be positive");
  require(horizon >= 0.0, "sim.horizon must be non-negative");
  const double steps = horizon / dt;
  require(std::abs(steps - std::round(steps)) <= 1e-6 * std::max(1.0, steps),
          "sim.horizon must be a multiple of sim.dt");
  require(output_stride >= 1, "sim.output_stride must be at least 1");
  require(k_R > 0.0 && k_p > 0.0, "pose gains k_R and k_p must be positive");
  require(q > 0.0 && v > 0.0 && p0 > 0.0, "ltv.q, ltv.v and ltv.p0 must be positive");
  require(check_every >= 1, "ltv.check_every must be at least 1");
  require(window > 0.0 && window_step > 0.0 && mu_o >= 0.0,
          "analysis window, window_step must be positive and mu_o non-negative");
  require(sample_stride >= 1, "analysis.sample_stride must be at least 1");
  require(fit_end > fit_start, "analysis.fit_end must exceed fit_start");
  require(random_axis || init_axis.norm() > 0.0, "pose.init_axis must be non-zero");
  require(init_angle >= 0.0 && init_angle <= kPi, "pose.init_angle must lie in [0, 1] (units of pi)");
  if (landmark_file.empty()) {
    require(grid_per_side >= 2 && grid_half_extent > 0.0, "landmark grid needs >= 2 points per side");
    require(known >= 3 && known <= grid_per_side * grid_per_side,
            "landmarks.known must satisfy 3 <= M <= N");
  }
  if (weight_policy == WeightPolicy::Explicit) {
    require(weights.size() == known || !landmark_file.empty(), "pose.weights needs one weight per known landmark");
  }
}

TrajectorySpec ScenarioConfig::trajectory_spec() const {
  if (trajectory == "line") {
    return straight_line_trajectory(line_origin, line_velocity, gravity);
  }
  TrajectorySpec spec = figure_eight_trajectory();
  spec.gravity = gravity;
  return spec;
}

CameraRig ScenarioConfig::rig() const {
  CameraRig r{exp_so3(camera_rotation), camera_position, intrinsics};
  r.validate();
  return r;
}

LandmarkMap ScenarioConfig::landmark_map() const {
  LandmarkMap map;
  if (landmark_file.empty()) {
    map = grid_landmarks(grid_half_extent, grid_per_side, known);
  } else {
    std::filesystem::path p(landmark_file);
    if (p.is_relative() && !base_dir.empty()) {
      p = std::filesystem::path(base_dir) / p;
    }
    map = load_landmarks(p.string());
  }
  map.validate();
  return map;
}

AnchorSet ScenarioConfig::anchors(const LandmarkMap& map) const {
  const std::span<const Vector3> known_points(map.positions.data(), map.known_count);
  AnchorOptions opts;
  switch (weight_policy) {
    case WeightPolicy::Tuned:
      return build_anchors(map, opts);
    case WeightPolicy::Uniform:
      opts.tune_weights = false;
      opts.require_distinct = false;
      return build_anchors(map, opts);
    case WeightPolicy::Explicit:
      if (weights.size() != map.known_count) {
        throw Error(ErrorCode::DimensionMismatch, "pose.weights: expected " +
                                                      std::to_string(map.known_count) + " weights");
      }
      opts.tune_weights = false;
      return build_anchors(known_points, weights, opts);
  }
  return build_anchors(map, opts);
}

Vector3 ScenarioConfig::initial_axis() const {
  if (!random_axis) {
    return init_axis.normalized();
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Vector3 a;
  do {
    a = Vector3(n(rng), n(rng), n(rng));
  } while (a.norm() < 1e-12);
  return a.normalized();
}

PoseEstimate ScenarioConfig::initial_pose() const {
  return {exp_so3(init_angle * initial_axis()), init_position};
}

}  // namespace casnav
