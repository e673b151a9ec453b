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

#include "mposim/runner.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include <openssl/evp.h>
#include <openssl/opensslv.h>

#include "json.hpp"
#include "mposim/errors.hpp"

#ifndef MPOSIM_VERSION
#define MPOSIM_VERSION "0.0.0"
#endif

namespace mposim {

using nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

ordered_json json_number(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

// All artifacts go through here so the manifest sees every file.
class Writer {
 public:
  explicit Writer(fs::path dir) : dir_(std::move(dir)) {}

  void write(const std::string& name, const std::string& content) {
    std::ofstream out(dir_ / name, std::ios::binary | std::ios::trunc);
    out << content;
    if (!out) throw std::runtime_error("cannot write " + (dir_ / name).string());
    if (std::find(names_.begin(), names_.end(), name) == names_.end()) names_.push_back(name);
  }

  const std::vector<std::string>& names() const { return names_; }
  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  std::vector<std::string> names_;
};

struct CheckFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void run_master(const RunConfig& cfg, Writer& writer, std::ostream* log) {
  const Liouvillian gen = model_liouvillian(cfg.model, cfg.layout, cfg.run.frame);
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
  const PropagationResult res = propagate(gen, initial_state(cfg), time_grid(cfg.run), opts);

  std::ostringstream csv;
  csv << "t,trace_err,pos_err,edge_leak";
  for (const auto& n : names) csv << ',' << n;
  csv << '\n';
  for (std::size_t i = 0; i < res.times.size(); ++i) {
    csv << num(res.times[i]) << ',' << num(res.trace_err[i]) << ','
        << num(cfg.tolerances.check_positivity ? res.pos_err[i] : std::nan("")) << ',' << num(res.edge_leak[i]);
    for (const auto& series : res.observables) csv << ',' << num(series[i].real());
    csv << '\n';
  }
  writer.write("timeseries.csv", csv.str());
  if (log) {
    double te = 0.0;
    double pe = 0.0;
    for (std::size_t i = 0; i < res.times.size(); ++i) {
      te = std::max(te, res.trace_err[i]);
      if (cfg.tolerances.check_positivity) pe = std::min(pe, res.pos_err[i]);
    }
    *log << "master: " << res.steps << " steps, max |Tr rho - 1| = " << te << ", min eigenvalue floor = " << pe
         << ", half-step self-check " << res.self_check_error << '\n';
  }
}

void run_ensemble(const RunConfig& cfg, Writer& writer, std::ostream* log) {
  UnravelingModel um = model_unraveling(cfg.model, cfg.layout, cfg.detectors, cfg.run.frame);
  um.count_homodyne_in_jump_mode = cfg.count_homodyne_in_jump_mode;
  um.leak_tol = cfg.tolerances.leak_tol;
  EnsembleOptions opts;
  opts.n_traj = cfg.run.n_traj;
  opts.seed = cfg.run.seed.value();
  opts.mode = cfg.run.mode == RunMode::jump ? UnravelingMode::jump : UnravelingMode::homodyne;
  opts.trajectory.t_final = std::llround(cfg.run.t_final / cfg.run.dt) * cfg.run.dt;
  opts.trajectory.dt = cfg.run.dt;
  opts.trajectory.sample_times = time_grid(cfg.run);
  opts.trajectory.record_stride = cfg.run.record_stride;
  opts.trajectory.method = cfg.run.method;
  opts.trajectory.density_max_dim = cfg.run.density_max_dim;
  for (const auto& name : cfg.run.observables) {
    NamedObservable obs = resolve_observable(name, cfg.layout);
    opts.observable_labels.push_back(obs.name);
    opts.trajectory.observables.push_back(std::move(obs.op));
  }
  const EnsembleStats stats = ensemble_average(um, initial_state(cfg), opts);

  std::ostringstream jsonl;
  for (std::size_t i = 0; i < stats.records.size(); ++i) write_record_jsonl(jsonl, i, stats.records[i]);
  writer.write("records.jsonl", jsonl.str());

  std::ostringstream csv;
  csv << "t,obs,mean,se\n";
  std::vector<const SeriesStats*> series;
  for (const auto* group : {&stats.observables, &stats.rates, &stats.counts, &stats.signals}) {
    for (const auto& s : *group) series.push_back(&s);
  }
  for (std::size_t i = 0; i < stats.times.size(); ++i) {
    for (const SeriesStats* s : series) {
      csv << num(stats.times[i]) << ',' << s->label << ',' << num(s->mean[i]) << ',' << num(s->se[i]) << '\n';
    }
  }
  writer.write("ensemble.csv", csv.str());
  if (log) {
    *log << to_string(opts.mode) << ": " << stats.n_traj << " trajectories, seed " << opts.seed
         << (stats.se_defined ? "" : " (standard errors undefined for a single trajectory)") << '\n';
  }
}

std::vector<CheckReport> run_verify(const RunConfig& cfg, Writer& writer, std::ostream* log) {
  std::vector<CheckReport> reports = default_suite(cfg.model, cfg.layout, cfg.verify);
  writer.write("verify_report.json", reports_to_json(reports) + "\n");
  if (log) {
    for (const auto& r : reports) {
      *log << (r.pass ? "PASS " : "FAIL ") << r.name << "  worst=" << r.worst << " margin=" << r.margin << "  at "
           << r.location << '\n';
    }
  }
  return reports;
}

ordered_json file_entry(const fs::path& dir, const std::string& name) {
  ordered_json e;
  e["name"] = name;
  e["bytes"] = fs::file_size(dir / name);
  e["sha256"] = sha256_file((dir / name).string());
  return e;
}

}  // namespace

const char* version_string() { return MPOSIM_VERSION; }

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("SHA-256 unavailable");
  }
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  char byte[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(byte, sizeof byte, "%02x", md[i]);
    hex += byte;
  }
  return hex;
}

std::string reports_to_json(const std::vector<CheckReport>& reports) {
  ordered_json arr = ordered_json::array();
  for (const auto& r : reports) {
    ordered_json o;
    o["name"] = r.name;
    o["status"] = r.pass ? "pass" : "fail";
    o["location"] = r.location;
    o["worst"] = json_number(r.worst);
    o["margin"] = json_number(r.margin);
    o["tolerance"] = json_number(r.tolerance);
    o["checked"] = r.checked;
    o["violations"] = r.violations;
    o["excluded_dim"] = r.excluded_dim;
    if (!r.detail.empty()) o["detail"] = r.detail;
    arr.push_back(std::move(o));
  }
  return arr.dump(2);
}

RunOutcome run(const RunConfig& config, const std::string& output_dir, std::ostream* log) {
  const auto start = std::chrono::steady_clock::now();
  RunOutcome outcome;
  outcome.output_dir = output_dir.empty() ? config.run.output_dir : output_dir;
  const fs::path dir(outcome.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    outcome.exit_code = exit_code::config;
    outcome.message = "cannot create output directory " + dir.string() + ": " + ec.message();
    return outcome;
  }
  // stale artifacts from an earlier run would otherwise look like outputs of this one
  for (const char* name : {"timeseries.csv", "records.jsonl", "ensemble.csv", "verify_report.json", "error.json",
                           "manifest.json"}) {
    fs::remove(dir / name, ec);
  }
  Writer writer(dir);

  ordered_json error;
  try {
    switch (config.run.mode) {
      case RunMode::master:
        run_master(config, writer, log);
        break;
      case RunMode::jump:
      case RunMode::homodyne:
        run_ensemble(config, writer, log);
        break;
      case RunMode::verify: {
        outcome.reports = run_verify(config, writer, log);
        if (!all_pass(outcome.reports)) {
          std::string failed;
          for (const auto& r : outcome.reports) {
            if (!r.pass) failed += (failed.empty() ? "" : ", ") + r.name;
          }
          throw CheckFailure("failed checks: " + failed);
        }
        break;
      }
    }
  } catch (const CheckFailure& e) {
    outcome.exit_code = exit_code::check_failure;
    outcome.message = e.what();
    error["kind"] = "check_failure";
    ordered_json failed = ordered_json::array();
    for (const auto& r : outcome.reports) {
      if (!r.pass) failed.push_back({{"name", r.name}, {"location", r.location}, {"margin", json_number(r.margin)}});
    }
    error["failed"] = failed;
  } catch (const NumericalGuardError& e) {
    outcome.exit_code = exit_code::numerical_guard;
    outcome.message = e.what();
    error["kind"] = "numerical_guard";
    error["guard"] = to_string(e.kind());
  } catch (const ConfigError& e) {
    outcome.exit_code = exit_code::config;
    outcome.message = e.what();
    error["kind"] = "config";
  } catch (const std::invalid_argument& e) {
    outcome.exit_code = exit_code::config;
    outcome.message = e.what();
    error["kind"] = "config";
  } catch (const std::exception& e) {
    outcome.exit_code = exit_code::internal;
    outcome.message = e.what();
    error["kind"] = "internal";
  }
  if (outcome.exit_code != exit_code::ok) {
    error["exit_code"] = outcome.exit_code;
    error["message"] = outcome.message;
    writer.write("error.json", error.dump(2) + "\n");
  }

  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  ordered_json manifest;
  manifest["tool"] = "mpo-sim";
  manifest["version"] = version_string();
  manifest["mode"] = to_string(config.run.mode);
  manifest["config_path"] = config.path;
  manifest["overrides"] = config.overrides;
  manifest["config"] = ordered_json::parse(config.echo);
  manifest["seed"] = config.run.seed ? ordered_json(*config.run.seed) : ordered_json(nullptr);
  manifest["versions"] = {{"mposim", version_string()},
                          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                        "." + std::to_string(EIGEN_MINOR_VERSION)},
                          {"openssl", OPENSSL_VERSION_TEXT},
                          {"compiler", __VERSION__}};
  manifest["threads"] = default_thread_count();
  manifest["wall_time_s"] = wall;
  manifest["exit_code"] = outcome.exit_code;
  ordered_json files = ordered_json::array();
  for (const auto& name : writer.names()) files.push_back(file_entry(dir, name));
  manifest["files"] = files;
  outcome.files = writer.names();
  try {
    writer.write("manifest.json", manifest.dump(2) + "\n");
    outcome.files.push_back("manifest.json");
  } catch (const std::exception& e) {
    if (outcome.exit_code == exit_code::ok) outcome.exit_code = exit_code::internal;
    outcome.message = e.what();
  }
  return outcome;
}

}  // namespace mposim
