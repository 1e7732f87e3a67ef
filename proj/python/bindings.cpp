#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <optional>
#include <sstream>

#include "ellipt3d/errors.hpp"
#include "ellipt3d/harness.hpp"

namespace py = pybind11;
using namespace ellipt3d;

namespace {

std::optional<FrameHierarchy> frames_for(const Problem& p, const std::vector<int>& ns, int kmax,
                                         const std::string& cache) {
  if (!p.uses_frames) return std::nullopt;
  int need = 1;
  for (int n : ns) need = std::max(need, stencil_width_for(p, n, kmax));
  std::ostringstream warn;
  FrameHierarchy h = load_or_build_frames(need, cache.empty() ? default_cache_path() : cache, &warn);
  if (!warn.str().empty()) PyErr_WarnEx(PyExc_RuntimeWarning, warn.str().c_str(), 1);
  return h;
}

SolverConfig solver_config(double tol, int max_outer, int sweeps) {
  SolverConfig c;
  c.tolerance = tol;
  c.max_outer = max_outer;
  c.inner_sweeps = sweeps;
  return c;
}

py::dict as_dict(const RunRecord& r) {
  py::dict d;
  d["n"] = r.n;
  d["h"] = r.h;
  d["interior"] = r.interior;
  d["boundary"] = r.boundary;
  d["max_error"] = r.max_error;
  d["rate_running"] = r.rate_running;
  d["iterations"] = r.iterations;
  d["seconds"] = r.seconds;
  d["c"] = r.c;
  d["converged"] = r.converged;
  d["residual"] = r.residual;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Monotone wide-stencil solvers for fully nonlinear elliptic equations in 3D";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());

  m.def("problem_names", &problem_names);
  m.def("problem_summary", [](const std::string& name) { return make_problem(name).summary; });
  m.def("default_cache_path", &default_cache_path);
  m.def(
      "precompute_frames",
      [](int kmax, const std::string& path) {
        const FrameHierarchy h = precompute_frames(kmax, path);
        py::list levels;
        for (int k = 1; k <= h.k_max; ++k)
          levels.append(py::make_tuple(k, h.level(k).frames.size(), h.level(k).dtheta));
        return levels;
      },
      py::arg("kmax"), py::arg("path"), "Writes the frame cache; returns (k, frames, dtheta) per level.");

  m.def(
      "solve",
      [](const std::string& name, int n, double tol, int max_outer, int sweeps, int kmax, const std::string& cache) {
        const Problem p = make_problem(name);
        const auto cfg = solver_config(tol, max_outer, sweeps);
        const auto frames = frames_for(p, {n}, kmax, cache);
        RunOutcome out;
        {
          py::gil_scoped_release release;
          out = run_problem(p, n, cfg, frames ? &*frames : nullptr, nullptr, kmax);
        }
        py::dict d = as_dict(out.record);
        d["seconds"] = py::none();
        const PointCloud& cloud = *out.cloud;
        py::array_t<double> pos({static_cast<py::ssize_t>(cloud.size()), py::ssize_t{3}});
        auto w = pos.mutable_unchecked<2>();
        for (NodeId i = 0; i < static_cast<NodeId>(cloud.size()); ++i) {
          const Vec3 x = cloud.position(i);
          w(i, 0) = x.x;
          w(i, 1) = x.y;
          w(i, 2) = x.z;
        }
        d["positions"] = pos;
        py::array_t<double> u(static_cast<py::ssize_t>(out.state.u.size()));
        std::copy(out.state.u.begin(), out.state.u.end(), u.mutable_data());
        d["u"] = u;
        d["residual_history"] = out.state.residual_history;
        return d;
      },
      py::arg("problem"), py::arg("n"), py::arg("tol") = 1e-8, py::arg("max_outer") = 5000,
      py::arg("sweeps") = 10, py::arg("kmax") = 0, py::arg("cache") = "",
      "Solves one problem at one resolution. Returns the run record plus node positions and u.");

  m.def(
      "study",
      [](const std::string& name, std::vector<int> ns, double tol, int max_outer, int sweeps, int kmax,
         const std::string& cache) {
        StudyConfig cfg;
        cfg.problem = name;
        cfg.ns = std::move(ns);
        cfg.solver = solver_config(tol, max_outer, sweeps);
        cfg.k_limit = kmax;
        cfg.validate();
        const auto frames = frames_for(make_problem(name), cfg.ns, kmax, cache);
        StudyResult res;
        {
          py::gil_scoped_release release;
          res = run_study(cfg, frames ? &*frames : nullptr);
        }
        std::ostringstream csv;
        emit_csv(res, csv);
        py::list records;
        for (const auto& r : res.records) records.append(as_dict(r));
        py::dict d;
        d["records"] = records;
        d["rate"] = res.rate;
        d["csv"] = csv.str();
        return d;
      },
      py::arg("problem"), py::arg("ns") = std::vector<int>{8, 12, 16, 20}, py::arg("tol") = 1e-8,
      py::arg("max_outer") = 5000, py::arg("sweeps") = 10, py::arg("kmax") = 0, py::arg("cache") = "",
      "Convergence study; returns records, the fitted rate and the CSV text.");
}
