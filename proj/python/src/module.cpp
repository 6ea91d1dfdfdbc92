#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "casnav/analysis.hpp"
#include "casnav/config.hpp"
#include "casnav/error.hpp"
#include "casnav/geometry.hpp"
#include "casnav/scenario.hpp"

namespace py = pybind11;
using namespace casnav;

namespace {

py::dict errors_dict(const CascadeErrors& e) {
  py::dict d;
  d["t"] = e.t;
  d["xtilde"] = e.xtilde;
  d["velocity"] = e.velocity;
  d["landmark_max"] = e.landmark_max;
  d["eta"] = e.eta;
  d["gravity"] = e.gravity;
  d["attitude"] = e.attitude;
  d["ptilde"] = e.ptilde;
  d["position"] = e.position;
  d["mapped_unknown_max"] = e.mapped_unknown_max;
  d["W"] = e.W;
  return d;
}

py::dict fit_dict(const ExponentialFit& f) {
  py::dict d;
  d["rate"] = f.rate;
  d["prefactor"] = f.prefactor;
  d["fit_prefactor"] = f.fit_prefactor;
  d["residual"] = f.residual;
  d["t_start"] = f.t_start;
  d["t_end"] = f.t_end;
  return d;
}

}  // namespace

PYBIND11_MODULE(_casnav, m) {
  m.doc() = "Cascaded LTV Riccati observer and SO(3) pose observer";

  static py::exception<Error> exc(m, "CasnavError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object inst = py::reinterpret_borrow<py::object>(exc.ptr())(e.what());
      inst.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(exc.ptr(), inst.ptr());
    }
  });

  // geometry
  m.def("skew", &skew, py::arg("v"));
  m.def("psi", &psi, py::arg("a"));
  m.def("proj", &proj, py::arg("x"));
  m.def("exp_so3", &exp_so3, py::arg("u"));
  m.def("attitude_distance", &attitude_distance, py::arg("r"));
  m.def("orthonormalize", &orthonormalize, py::arg("m"));
  m.def("is_rotation", &is_rotation, py::arg("r"), py::arg("tol") = 1e-9);

  m.def(
      "fit_exponential",
      [](const std::vector<double>& t, const std::vector<double>& y, double t0, double t1) {
        return fit_dict(fit_exponential(t, y, t0, t1));
      },
      py::arg("times"), py::arg("values"), py::arg("t_start"), py::arg("t_end"));

  py::class_<ScenarioConfig>(m, "Config")
      .def(py::init<>())
      .def("set", &set_config_value, py::arg("key"), py::arg("value"),
           "Apply one `section.name = value` assignment as in a config file.")
      .def("validate", &ScenarioConfig::validate)
      .def("to_ini", &to_ini)
      .def_readwrite("trajectory", &ScenarioConfig::trajectory)
      .def_readwrite("k_R", &ScenarioConfig::k_R)
      .def_readwrite("k_p", &ScenarioConfig::k_p)
      .def_readwrite("dt", &ScenarioConfig::dt)
      .def_readwrite("horizon", &ScenarioConfig::horizon)
      .def_readwrite("seed", &ScenarioConfig::seed)
      .def_readwrite("output_stride", &ScenarioConfig::output_stride)
      .def_readwrite("fit_start", &ScenarioConfig::fit_start)
      .def_readwrite("fit_end", &ScenarioConfig::fit_end)
      .def_readwrite("window", &ScenarioConfig::window)
      .def_readwrite("window_step", &ScenarioConfig::window_step)
      .def_readwrite("base_dir", &ScenarioConfig::base_dir)
      .def_property(
          "init_angle", [](const ScenarioConfig& c) { return c.init_angle; },
          [](ScenarioConfig& c, double a) { c.init_angle = a; }, "radians");

  m.def("load_config", &load_config, py::arg("path"));
  m.def(
      "parse_config",
      [](const std::string& text, const std::string& source) {
        std::istringstream in(text);
        return parse_config(in, source);
      },
      py::arg("text"), py::arg("source") = "<config>");

  m.def(
      "run_scenario",
      [](const ScenarioConfig& cfg, const std::string& out_dir) {
        RunResult r;
        {
          py::gil_scoped_release release;
          RunOptions opts;
          opts.out_dir = out_dir;
          r = run_scenario(cfg, opts);
        }
        py::dict d;
        d["terminal"] = errors_dict(r.summary.terminal);
        d["steps"] = r.summary.steps;
        d["min_p_eigenvalue"] = r.summary.min_p_eigenvalue;
        d["max_p_asymmetry"] = r.summary.max_p_asymmetry;
        d["max_lyapunov_increase"] = r.summary.max_lyapunov_increase;
        d["fit"] = r.summary.fit ? py::object(fit_dict(*r.summary.fit)) : py::object(py::none());
        d["times"] = r.summary.times;
        d["xtilde"] = r.summary.xtilde;
        d["lyapunov"] = r.summary.lyapunov;
        d["weights"] = r.anchors.weights;
        d["Mbar_eigenvalues"] = Vector3(r.anchors.mbar_eigenvalues);
        d["R_hat"] = Matrix3(r.pose.R);
        d["p_hat"] = Vector3(r.pose.p);
        return d;
      },
      py::arg("config"), py::arg("out_dir") = "",
      "Truth, LTV observer and pose observer over the configured horizon.");

  m.def(
      "check_observability",
      [](const ScenarioConfig& cfg, const std::string& out_dir) {
        ObservabilityResult r;
        {
          py::gil_scoped_release release;
          r = check_observability(cfg, out_dir);
        }
        py::list pe;
        for (const auto& l : r.pe.landmarks) {
          py::dict e;
          e["landmark"] = l.landmark;
          e["worst_min_eig"] = l.worst_min_eig;
          e["pass"] = l.pass;
          pe.append(e);
        }
        std::vector<double> min_eigs;
        for (const auto& g : r.direct) min_eigs.push_back(g.min_eig);
        py::dict d;
        d["pe"] = pe;
        d["pe_pass"] = r.pe.all_pass();
        d["gramian_min_eig"] = min_eigs;
        d["relative_difference"] = r.relative_difference;
        d["observable"] = r.observable;
        return d;
      },
      py::arg("config"), py::arg("out_dir") = "");

  m.def(
      "sweep",
      [](const ScenarioConfig& cfg, const std::string& parameter, const std::vector<double>& values,
         const std::string& out_dir) {
        std::vector<SweepRow> rows;
        {
          py::gil_scoped_release release;
          rows = sweep(cfg, parameter, values, out_dir);
        }
        py::list out;
        for (const auto& r : rows) {
          py::dict d;
          d["parameter"] = r.parameter;
          d["value"] = r.value;
          d["label"] = r.label;
          d["attitude"] = r.attitude;
          d["ptilde"] = r.ptilde;
          d["xtilde"] = r.xtilde;
          d["position"] = r.position;
          d["rate"] = r.rate;
          d["converged"] = r.converged;
          out.append(d);
        }
        return out;
      },
      py::arg("config"), py::arg("parameter"), py::arg("values"), py::arg("out_dir") = "");
  m.attr("sweep_parameters") = sweep_parameters();
}
