// Copyright 2026 The mpo-sim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/stl.h>

#include "mposim/config.hpp"
#include "mposim/dynamics.hpp"
#include "mposim/errors.hpp"
#include "mposim/rng.hpp"
#include "mposim/runner.hpp"
#include "mposim/verify.hpp"

namespace py = pybind11;
using namespace mposim;

namespace {

py::dict report_dict(const CheckReport& r) {
  py::dict d;
  d["name"] = r.name;
  d["pass"] = r.pass;
  d["location"] = r.location;
  d["worst"] = r.worst;
  d["margin"] = r.margin;
  d["tolerance"] = r.tolerance;
  d["checked"] = r.checked;
  d["violations"] = r.violations;
  d["excluded_dim"] = r.excluded_dim;
  d["detail"] = r.detail;
  return d;
}

py::list reports_list(const std::vector<CheckReport>& reports) {
  py::list out;
  for (const auto& r : reports) out.append(report_dict(r));
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, mod) {
  mod.doc() = "Native core of mpo-sim";
  py::register_exception<ConfigError>(mod, "ConfigError", PyExc_ValueError);
  py::register_exception<NumericalGuardError>(mod, "NumericalGuardError", PyExc_ArithmeticError);

  mod.def("version", &version_string);
  mod.def("derive_seed", &derive_seed, py::arg("master"), py::arg("traj"));

  mod.def(
      "ladder",
      [](int n, int m, std::vector<int> trunc, int mode, bool creation_op) {
        const ModeLayout layout = make_layout(n, m, std::move(trunc));
        return (creation_op ? creation(layout, mode) : annihilation(layout, mode)).dense();
      },
      py::arg("n"), py::arg("m"), py::arg("trunc"), py::arg("mode"), py::arg("creation") = false,
      "Dense ladder operator of `mode` (0-based, subharmonic modes first).");

  mod.def("L0", &L0, py::arg("q"), py::arg("eps"), py::arg("n"), py::arg("m"));

  mod.def(
      "lemma_rk_check",
      [](double r, int k, double eps, double x_max, double step) {
        const auto grid = lemma_rk_grid(r, k, x_max, step);
        return report_dict(lemma_rk_check(r, k, eps, grid));
      },
      py::arg("r"), py::arg("k"), py::arg("eps"), py::arg("x_max") = 100.0, py::arg("step") = 1e-3);

  mod.def(
      "verify",
      [](const std::string& path, const std::vector<std::string>& overrides) {
        const RunConfig cfg = load_config(path, overrides);
        std::vector<CheckReport> reports;
        {
          py::gil_scoped_release nogil;
          reports = default_suite(cfg.model, cfg.layout, cfg.verify);
        }
        return reports_list(reports);
      },
      py::arg("config"), py::arg("overrides") = std::vector<std::string>{},
      "Certificate suite for a config; one dict per check.");

  mod.def(
      "master",
      [](const std::string& path, const std::vector<std::string>& overrides) {
        const RunConfig cfg = load_config(path, overrides);
        PropagateOptions opts;
        opts.dt = cfg.run.dt;
        opts.leak_tol = cfg.tolerances.leak_tol;
        opts.trace_tol = cfg.tolerances.trace_tol;
        opts.edge_mask = edge_mask(cfg.layout);
        opts.keep_states = false;
        opts.check_positivity = cfg.tolerances.check_positivity;
        std::vector<std::string> names;
        for (const auto& name : cfg.run.observables) {
          NamedObservable obs = resolve_observable(name, cfg.layout);
          names.push_back(obs.name);
          opts.observables.push_back(std::move(obs.op));
        }
        PropagationResult res;
        {
          py::gil_scoped_release nogil;
          res = propagate(model_liouvillian(cfg.model, cfg.layout, cfg.run.frame), initial_state(cfg),
                          time_grid(cfg.run), opts);
        }
        py::dict out;
        out["t"] = res.times;
        out["trace_err"] = res.trace_err;
        out["min_eigenvalue"] = res.min_eigenvalue;
        out["edge_leak"] = res.edge_leak;
        py::dict obs;
        for (std::size_t i = 0; i < names.size(); ++i) {
          std::vector<double> re;
          for (const Complex& c : res.observables[i]) re.push_back(c.real());
          obs[py::str(names[i])] = re;
        }
        out["observables"] = obs;
        return out;
      },
      py::arg("config"), py::arg("overrides") = std::vector<std::string>{},
      "Master-equation propagation of a config; nothing is written to disk.");

  mod.def(
      "run",
      [](const std::string& path, const std::vector<std::string>& overrides, const std::string& out_dir) {
        const RunConfig cfg = load_config(path, overrides);
        RunOutcome outcome;
        {
          py::gil_scoped_release nogil;
          outcome = run(cfg, out_dir);
        }
        py::dict d;
        d["exit_code"] = outcome.exit_code;
        d["output_dir"] = outcome.output_dir;
        d["files"] = outcome.files;
        d["message"] = outcome.message;
        d["reports"] = reports_list(outcome.reports);
        return d;
      },
      py::arg("config"), py::arg("overrides") = std::vector<std::string>{}, py::arg("out") = std::string(),
      "Same as `mpo-sim run`; returns the exit code and the written files.");

  mod.def("sha256_file", &sha256_file);
}
