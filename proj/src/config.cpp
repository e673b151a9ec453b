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

#include "mposim/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace mposim {

using nlohmann::json;

namespace {

// Line of every value in well-formed JSON text, keyed by JSON pointer.
// nlohmann::json keeps no source positions, so this walks the text once more.
class LineIndex {
 public:
  explicit LineIndex(const std::string& text) : s_(text) {
    skip();
    if (pos_ < s_.size()) value("");
  }
  const std::map<std::string, int>& lines() const { return lines_; }

 private:
  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) {
      if (s_[pos_] == '\n') ++line_;
      ++pos_;
    }
  }
  std::string string() {
    std::string out;
    ++pos_;  // opening quote
    while (pos_ < s_.size() && s_[pos_] != '"') {
      if (s_[pos_] == '\\') ++pos_;
      if (pos_ < s_.size()) out += s_[pos_++];
    }
    ++pos_;
    return out;
  }
  static std::string escape(const std::string& key) {
    std::string out;
    for (char c : key) {
      if (c == '~') out += "~0";
      else if (c == '/') out += "~1";
      else out += c;
    }
    return out;
  }
  void value(const std::string& ptr) {
    lines_[ptr] = line_;
    if (pos_ >= s_.size()) return;
    const char c = s_[pos_];
    if (c == '{') {
      ++pos_;
      skip();
      while (pos_ < s_.size() && s_[pos_] != '}') {
        const std::string key = string();
        skip();
        ++pos_;  // ':'
        skip();
        value(ptr + "/" + escape(key));
        skip();
        if (pos_ < s_.size() && s_[pos_] == ',') ++pos_;
        skip();
      }
      ++pos_;
    } else if (c == '[') {
      ++pos_;
      skip();
      int idx = 0;
      while (pos_ < s_.size() && s_[pos_] != ']') {
        value(ptr + "/" + std::to_string(idx++));
        skip();
        if (pos_ < s_.size() && s_[pos_] == ',') ++pos_;
        skip();
      }
      ++pos_;
    } else if (c == '"') {
      string();
    } else {
      while (pos_ < s_.size() && s_[pos_] != ',' && s_[pos_] != ']' && s_[pos_] != '}' &&
             !std::isspace(static_cast<unsigned char>(s_[pos_]))) {
        ++pos_;
      }
    }
  }

  const std::string& s_;
  std::size_t pos_ = 0;
  int line_ = 1;
  std::map<std::string, int> lines_;
};

class Reader {
 public:
  Reader(json root, std::map<std::string, int> lines, std::set<std::string> overridden, std::string origin)
      : root_(std::move(root)), lines_(std::move(lines)), overridden_(std::move(overridden)), origin_(std::move(origin)) {}

  const json& root() const { return root_; }

  [[noreturn]] void fail(const std::string& ptr, const std::string& message) const {
    int line = 0;
    std::string where = origin_;
    bool from_override = false;
    for (const auto& o : overridden_) {
      if (ptr == o || ptr.rfind(o + "/", 0) == 0) from_override = true;
    }
    if (from_override) {
      where += " (override)";
    } else {
      // nearest enclosing value present in the file
      std::string p = ptr;
      while (true) {
        const auto it = lines_.find(p);
        if (it != lines_.end()) {
          line = it->second;
          break;
        }
        const auto cut = p.find_last_of('/');
        if (cut == std::string::npos) break;
        p = p.substr(0, cut);
      }
      if (line > 0) where += ":" + std::to_string(line);
    }
    throw ConfigError(ptr, line, where + ": " + (ptr.empty() ? "/" : ptr) + ": " + message);
  }

  bool has(const std::string& ptr) const { return root_.contains(json::json_pointer(ptr)); }
  const json& at(const std::string& ptr) const {
    if (!has(ptr)) fail(ptr, "required field is missing");
    return root_.at(json::json_pointer(ptr));
  }

  void only_keys(const std::string& ptr, std::initializer_list<const char*> keys) const {
    if (!has(ptr)) return;
    const json& obj = at(ptr);
    if (!obj.is_object()) fail(ptr, "expected an object");
    for (const auto& [key, v] : obj.items()) {
      if (key == "_notes") continue;
      bool known = false;
      for (const char* k : keys) known = known || key == k;
      if (!known) fail(ptr + "/" + key, "unknown field");
    }
  }

  double number(const std::string& ptr) const {
    const json& v = at(ptr);
    if (!v.is_number()) fail(ptr, "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) fail(ptr, "must be finite");
    return x;
  }
  double number(const std::string& ptr, double fallback) const { return has(ptr) ? number(ptr) : fallback; }

  long long integer(const std::string& ptr) const {
    const json& v = at(ptr);
    if (!v.is_number_integer()) fail(ptr, "expected an integer");
    return v.get<long long>();
  }
  long long integer(const std::string& ptr, long long fallback) const { return has(ptr) ? integer(ptr) : fallback; }

  std::string text(const std::string& ptr) const {
    const json& v = at(ptr);
    if (!v.is_string()) fail(ptr, "expected a string");
    return v.get<std::string>();
  }
  std::string text(const std::string& ptr, const std::string& fallback) const {
    return has(ptr) ? text(ptr) : fallback;
  }

  bool boolean(const std::string& ptr, bool fallback) const {
    if (!has(ptr)) return fallback;
    const json& v = at(ptr);
    if (!v.is_boolean()) fail(ptr, "expected true or false");
    return v.get<bool>();
  }

  // number, [re, im] or {"re": .., "im": ..}
  Complex complex(const std::string& ptr) const {
    const json& v = at(ptr);
    if (v.is_number()) return {number(ptr), 0.0};
    if (v.is_array() && v.size() == 2) return {number(ptr + "/0"), number(ptr + "/1")};
    if (v.is_object()) {
      only_keys(ptr, {"re", "im"});
      return {number(ptr + "/re", 0.0), number(ptr + "/im", 0.0)};
    }
    fail(ptr, "expected a number, [re, im] or {\"re\": .., \"im\": ..}");
  }

  std::size_t array_size(const std::string& ptr) const {
    const json& v = at(ptr);
    if (!v.is_array()) fail(ptr, "expected an array");
    return v.size();
  }

  std::vector<double> numbers(const std::string& ptr) const {
    std::vector<double> out;
    const std::size_t n = array_size(ptr);
    for (std::size_t i = 0; i < n; ++i) out.push_back(number(ptr + "/" + std::to_string(i)));
    return out;
  }

  std::vector<Complex> complexes(const std::string& ptr) const {
    std::vector<Complex> out;
    const std::size_t n = array_size(ptr);
    for (std::size_t i = 0; i < n; ++i) out.push_back(complex(ptr + "/" + std::to_string(i)));
    return out;
  }

  std::vector<int> integers(const std::string& ptr) const {
    std::vector<int> out;
    const std::size_t n = array_size(ptr);
    for (std::size_t i = 0; i < n; ++i) out.push_back(static_cast<int>(integer(ptr + "/" + std::to_string(i))));
    return out;
  }

 private:
  json root_;
  std::map<std::string, int> lines_;
  std::set<std::string> overridden_;
  std::string origin_;
};

std::string dotted_to_pointer(const std::string& key) {
  std::string ptr;
  std::stringstream ss(key);
  std::string part;
  while (std::getline(ss, part, '.')) {
    if (part.empty()) throw ConfigError(key, 0, "override key '" + key + "' has an empty component");
    ptr += "/" + part;
  }
  return ptr;
}

double max_frequency(const ModelParams& p) {
  double r = 0.0;
  for (double w : p.ws) r = std::max(r, std::abs(w));
  for (double w : p.wp) r = std::max(r, std::abs(w));
  return r;
}

void read_layout(const Reader& rd, RunConfig& cfg) {
  rd.only_keys("/layout", {"n", "m", "trunc"});
  const auto n = static_cast<int>(rd.integer("/layout/n"));
  const auto m = static_cast<int>(rd.integer("/layout/m"));
  if (n < 1) rd.fail("/layout/n", "need at least one subharmonic mode");
  if (m < 1) rd.fail("/layout/m", "need at least one pump mode");
  const std::vector<int> trunc = rd.integers("/layout/trunc");
  if (trunc.size() != static_cast<std::size_t>(n + m)) {
    rd.fail("/layout/trunc", "expected n+m = " + std::to_string(n + m) + " cutoffs");
  }
  for (std::size_t k = 0; k < trunc.size(); ++k) {
    if (trunc[k] < 2) rd.fail("/layout/trunc/" + std::to_string(k), "cutoff must be >= 2");
  }
  double dim = 1.0;
  for (int t : trunc) dim *= t;
  if (dim > 1e7) rd.fail("/layout/trunc", "total dimension too large");
  cfg.layout = make_layout(n, m, trunc);
}

void read_model(const Reader& rd, RunConfig& cfg) {
  const ModeLayout& layout = cfg.layout;
  const int n = layout.n_sub();
  const int m = layout.n_pump();
  rd.only_keys("/model", {"ws", "wp", "g", "alpha", "drive"});
  ModelParams& p = cfg.model;
  p.ws = rd.numbers("/model/ws");
  p.wp = rd.numbers("/model/wp");
  if (p.ws.size() != static_cast<std::size_t>(n)) rd.fail("/model/ws", "expected n = " + std::to_string(n) + " frequencies");
  if (p.wp.size() != static_cast<std::size_t>(m)) rd.fail("/model/wp", "expected m = " + std::to_string(m) + " frequencies");
  double sum_s = 0.0;
  double sum_p = 0.0;
  for (double w : p.ws) sum_s += w;
  for (double w : p.wp) sum_p += w;
  if (std::abs(sum_s - sum_p) > kResonanceTol) {
    std::ostringstream os;
    os.precision(12);
    os << "resonance condition violated: sum ws = " << sum_s << " but sum wp = " << sum_p
       << " (the model requires sum_i ws_i = sum_j wp_j, tolerance " << kResonanceTol << ")";
    rd.fail("/model/wp", os.str());
  }
  const Complex g = rd.complex("/model/g");
  if (g.imag() != 0.0) rd.fail("/model/g", "coupling g must be real so that H = N_s + N_p + (ig/2) I is self-adjoint");
  if (g.real() == 0.0) rd.fail("/model/g", "coupling g must be nonzero");
  p.g = g.real();

  rd.only_keys("/model/alpha", {"1", "2", "3", "4", "5", "6", "7", "8"});
  for (int block = 1; block <= 8; ++block) {
    const std::size_t len = static_cast<std::size_t>(block % 2 == 1 ? n : m);
    const std::string ptr = "/model/alpha/" + std::to_string(block);
    auto& amps = p.alpha[static_cast<std::size_t>(block - 1)];
    if (rd.has(ptr)) {
      amps = rd.complexes(ptr);
      if (amps.size() != len) rd.fail(ptr, "block " + std::to_string(block) + " needs " + std::to_string(len) + " amplitudes");
    } else {
      amps.assign(len, Complex(0.0, 0.0));
    }
  }

  rd.only_keys("/model/drive", {"lambda", "horizon", "theta"});
  p.drive.lambda = rd.has("/model/drive/lambda") ? rd.complex("/model/drive/lambda") : Complex(0.0, 0.0);
  if (rd.has("/model/drive/horizon") && !rd.at("/model/drive/horizon").is_null()) {
    p.drive.horizon = rd.number("/model/drive/horizon");
    if (p.drive.horizon < 0.0) rd.fail("/model/drive/horizon", "must be nonnegative (null for an always-on drive)");
  }
  if (rd.has("/model/drive/theta")) {
    p.drive.theta = rd.numbers("/model/drive/theta");
    if (p.drive.theta.size() != static_cast<std::size_t>(n)) {
      rd.fail("/model/drive/theta", "expected one local-oscillator phase per subharmonic mode");
    }
  }
  if (p.drive.lambda != Complex(0.0, 0.0)) {
    for (std::size_t j = 0; j < p.alpha[3].size(); ++j) {
      if (p.alpha[3][j] == Complex(0.0, 0.0)) {
        rd.fail("/model/alpha/4/" + std::to_string(j), "a nonzero pump drive needs every pump-input amplitude nonzero");
      }
    }
  }
  try {
    validate(p, layout);
  } catch (const std::invalid_argument& e) {
    rd.fail("/model", e.what());
  }
}

void read_detectors(const Reader& rd, RunConfig& cfg) {
  cfg.detectors = default_detectors(cfg.layout);
  rd.only_keys("/detectors", {"counting", "homodyne", "count_homodyne_in_jump_mode"});
  const int d = 4 * cfg.layout.n_modes();
  auto channels = [&](const std::string& ptr, std::vector<int>& out) {
    if (!rd.has(ptr)) return;
    out.clear();
    const std::vector<int> ch = rd.integers(ptr);
    for (std::size_t i = 0; i < ch.size(); ++i) {
      if (ch[i] < 1 || ch[i] > d) {
        rd.fail(ptr + "/" + std::to_string(i), "channel indices run from 1 to 4(n+m) = " + std::to_string(d));
      }
      out.push_back(ch[i] - 1);
    }
  };
  channels("/detectors/counting", cfg.detectors.counting);
  channels("/detectors/homodyne", cfg.detectors.homodyne);
  std::set<int> seen;
  for (int c : cfg.detectors.counting) {
    if (!seen.insert(c).second) rd.fail("/detectors/counting", "channel " + std::to_string(c + 1) + " listed twice");
  }
  for (int c : cfg.detectors.homodyne) {
    if (!seen.insert(c).second) rd.fail("/detectors/homodyne", "channel " + std::to_string(c + 1) + " already assigned");
  }
  cfg.count_homodyne_in_jump_mode = rd.boolean("/detectors/count_homodyne_in_jump_mode", false);
}

void read_initial(const Reader& rd, RunConfig& cfg) {
  rd.only_keys("/initial", {"type", "occupations", "amplitudes"});
  const std::string type = rd.text("/initial/type", "vacuum");
  const std::size_t modes = static_cast<std::size_t>(cfg.layout.n_modes());
  if (type == "vacuum") {
    cfg.initial.kind = InitialState::Kind::vacuum;
  } else if (type == "basis") {
    cfg.initial.kind = InitialState::Kind::basis;
    cfg.initial.occupations = rd.integers("/initial/occupations");
    if (cfg.initial.occupations.size() != modes) rd.fail("/initial/occupations", "expected one occupation per mode");
    for (std::size_t k = 0; k < modes; ++k) {
      const int occ = cfg.initial.occupations[k];
      if (occ < 0 || occ >= cfg.layout.cutoff(static_cast<int>(k))) {
        rd.fail("/initial/occupations/" + std::to_string(k), "occupation outside 0..cutoff-1");
      }
    }
  } else if (type == "coherent") {
    cfg.initial.kind = InitialState::Kind::coherent;
    cfg.initial.amplitudes = rd.complexes("/initial/amplitudes");
    if (cfg.initial.amplitudes.size() != modes) rd.fail("/initial/amplitudes", "expected one amplitude per mode");
  } else {
    rd.fail("/initial/type", "expected vacuum, basis or coherent");
  }
}

void read_run(const Reader& rd, RunConfig& cfg) {
  rd.only_keys("/run", {"mode", "t_final", "dt", "grid_points", "n_traj", "seed", "observables", "output_dir", "frame",
                        "record_stride", "state_method", "density_max_dim"});
  RunSettings& run = cfg.run;
  const std::string mode = rd.text("/run/mode");
  if (mode == "master") run.mode = RunMode::master;
  else if (mode == "jump") run.mode = RunMode::jump;
  else if (mode == "homodyne") run.mode = RunMode::homodyne;
  else if (mode == "verify") run.mode = RunMode::verify;
  else rd.fail("/run/mode", "expected master, jump, homodyne or verify");

  const bool dynamic = run.mode != RunMode::verify;
  const bool stochastic = run.mode == RunMode::jump || run.mode == RunMode::homodyne;
  if (dynamic) {
    run.t_final = rd.number("/run/t_final");
    run.dt = rd.number("/run/dt");
    if (!(run.t_final > 0.0)) rd.fail("/run/t_final", "must be positive");
    if (!(run.dt > 0.0) || run.dt > run.t_final) rd.fail("/run/dt", "must lie in (0, t_final]");
    const double steps = run.t_final / run.dt;
    if (std::abs(steps - std::round(steps)) > 1e-9 * std::max(1.0, steps)) {
      rd.fail("/run/dt", "t_final must be an integer multiple of dt");
    }
    run.grid_points = static_cast<int>(rd.integer("/run/grid_points", 11));
    if (run.grid_points < 2) rd.fail("/run/grid_points", "need at least 2 grid points");
    if (run.grid_points - 1 > std::llround(steps)) rd.fail("/run/grid_points", "more grid intervals than time steps");
  }
  if (stochastic) {
    const long long n = rd.integer("/run/n_traj");
    if (n < 1) rd.fail("/run/n_traj", "need at least one trajectory");
    run.n_traj = static_cast<std::size_t>(n);
    if (!rd.has("/run/seed")) rd.fail("/run/seed", "a seed is required for " + mode + " mode");
    const json& s = rd.at("/run/seed");
    if (!s.is_number_unsigned()) rd.fail("/run/seed", "seed must be a nonnegative integer");
    run.seed = s.get<std::uint64_t>();
    run.record_stride = static_cast<int>(rd.integer("/run/record_stride", 1));
    if (run.record_stride < 1) rd.fail("/run/record_stride", "must be >= 1");
    const std::string method = rd.text("/run/state_method", "automatic");
    if (method == "automatic") run.method = StateMethod::automatic;
    else if (method == "pure") run.method = StateMethod::pure;
    else if (method == "density") run.method = StateMethod::density;
    else rd.fail("/run/state_method", "expected automatic, pure or density");
    const long long dm = rd.integer("/run/density_max_dim", 64);
    if (dm < 0) rd.fail("/run/density_max_dim", "must be nonnegative");
    run.density_max_dim = static_cast<std::size_t>(dm);
  } else if (rd.has("/run/seed")) {
    const json& s = rd.at("/run/seed");
    if (!s.is_number_unsigned()) rd.fail("/run/seed", "seed must be a nonnegative integer");
    run.seed = s.get<std::uint64_t>();
  }

  if (rd.has("/run/observables")) {
    const std::size_t n = rd.array_size("/run/observables");
    for (std::size_t i = 0; i < n; ++i) {
      const std::string ptr = "/run/observables/" + std::to_string(i);
      const std::string name = rd.text(ptr);
      try {
        resolve_observable(name, cfg.layout);
      } catch (const std::invalid_argument& e) {
        rd.fail(ptr, e.what());
      }
      run.observables.push_back(name);
    }
  }
  run.output_dir = rd.text("/run/output_dir", "out");
  const std::string frame = rd.text("/run/frame", "rotating");
  if (frame == "rotating") run.frame = FrameKind::rotating;
  else if (frame == "lab") run.frame = FrameKind::lab;
  else rd.fail("/run/frame", "expected rotating or lab");
}

void read_tolerances(const Reader& rd, RunConfig& cfg) {
  rd.only_keys("/tolerances", {"leak_tol", "trace_tol", "check_positivity"});
  cfg.tolerances.leak_tol = rd.number("/tolerances/leak_tol", 1e-6);
  cfg.tolerances.trace_tol = rd.number("/tolerances/trace_tol", 1e-6);
  cfg.tolerances.check_positivity = rd.boolean("/tolerances/check_positivity", true);
  if (!(cfg.tolerances.leak_tol > 0.0)) rd.fail("/tolerances/leak_tol", "must be positive");
  if (!(cfg.tolerances.trace_tol > 0.0)) rd.fail("/tolerances/trace_tol", "must be positive");
}

void read_verify(const Reader& rd, RunConfig& cfg) {
  rd.only_keys("/verify", {"eps", "margin", "n_samples", "seed", "grid_step"});
  VerifyOptions& v = cfg.verify;
  if (rd.has("/verify/eps")) {
    v.eps = rd.number("/verify/eps");
    const double bound = admissible_eps_bound(cfg.model);
    if (!(v.eps > 0.0) || !(v.eps < bound)) {
      std::ostringstream os;
      os << "eps must lie in (0, 1/(2 r^{2(n+m)})) = (0, " << bound << ") with r = " << max_frequency(cfg.model);
      rd.fail("/verify/eps", os.str());
    }
  }
  v.margin = static_cast<int>(rd.integer("/verify/margin", 1));
  int min_cut = cfg.layout.cutoff(0);
  for (int c : cfg.layout.cutoffs()) min_cut = std::min(min_cut, c);
  if (v.margin < 1 || v.margin >= min_cut) rd.fail("/verify/margin", "must lie in [1, min cutoff - 1]");
  v.hypotheses.n_samples = static_cast<int>(rd.integer("/verify/n_samples", 200));
  if (v.hypotheses.n_samples < 1) rd.fail("/verify/n_samples", "must be positive");
  if (rd.has("/verify/seed")) {
    const json& s = rd.at("/verify/seed");
    if (!s.is_number_unsigned()) rd.fail("/verify/seed", "seed must be a nonnegative integer");
    v.hypotheses.seed = s.get<std::uint64_t>();
  }
  v.grid_step = rd.number("/verify/grid_step", 1e-3);
  if (!(v.grid_step > 0.0)) rd.fail("/verify/grid_step", "must be positive");
}

}  // namespace

ConfigError::ConfigError(std::string path, int line, const std::string& message)
    : std::runtime_error(message), field_(std::move(path)), line_(line) {}

const char* to_string(RunMode mode) {
  switch (mode) {
    case RunMode::master:
      return "master";
    case RunMode::jump:
      return "jump";
    case RunMode::homodyne:
      return "homodyne";
    case RunMode::verify:
      return "verify";
  }
  return "unknown";
}

RunConfig parse_config(const std::string& text, const std::vector<std::string>& overrides, const std::string& origin) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    // byte offset -> line
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(upto), '\n'));
    throw ConfigError("", line, origin + ":" + std::to_string(line) + ": parse error: " + e.what());
  }
  if (!root.is_object()) throw ConfigError("", 1, origin + ":1: top level must be a JSON object");

  std::set<std::string> overridden;
  for (const std::string& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("", 0, "override '" + item + "' must look like key.path=value");
    }
    const std::string ptr = dotted_to_pointer(item.substr(0, eq));
    const std::string raw = item.substr(eq + 1);
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::parse_error&) {
      value = raw;
    }
    try {
      root[json::json_pointer(ptr)] = value;
    } catch (const json::exception& e) {
      throw ConfigError(ptr, 0, "override '" + item + "': " + e.what());
    }
    overridden.insert(ptr);
  }

  Reader rd(root, LineIndex(text).lines(), overridden, origin);
  rd.only_keys("", {"layout", "model", "detectors", "initial", "run", "tolerances", "verify"});
  RunConfig cfg;
  cfg.path = origin;
  cfg.overrides = overrides;
  read_layout(rd, cfg);
  read_model(rd, cfg);
  read_detectors(rd, cfg);
  read_initial(rd, cfg);
  read_run(rd, cfg);
  read_tolerances(rd, cfg);
  read_verify(rd, cfg);
  cfg.echo = root.dump();
  return cfg;
}

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("", 0, path + ": cannot open config file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), overrides, path);
}

NamedObservable resolve_observable(const std::string& name, const ModeLayout& layout) {
  auto find_mode = [&](const std::string& mode_name) {
    for (int k = 0; k < layout.n_modes(); ++k) {
      if (layout.mode_name(k) == mode_name) return k;
    }
    throw std::invalid_argument("unknown mode '" + mode_name + "' in observable '" + name + "'");
  };
  if (name.rfind("n_", 0) == 0) {
    const int mode = find_mode(name.substr(2));
    return {name, number(layout, mode)};
  }
  if (name.rfind("quad_", 0) == 0) {
    const auto at = name.find('@');
    if (at == std::string::npos) throw std::invalid_argument("quadrature '" + name + "' needs a phase: quad_<mode>@<phase>");
    const int mode = find_mode(name.substr(5, at - 5));
    const std::string phase_text = name.substr(at + 1);
    std::size_t used = 0;
    double phase = 0.0;
    try {
      phase = std::stod(phase_text, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != phase_text.size() || !std::isfinite(phase)) {
      throw std::invalid_argument("bad phase '" + phase_text + "' in observable '" + name + "'");
    }
    const OperatorMatrix a = annihilation(layout, mode);
    const Complex e(std::cos(phase), -std::sin(phase));
    return {name, a.scaled(e) + a.adjoint().scaled(std::conj(e))};
  }
  throw std::invalid_argument("unknown observable '" + name + "' (expected n_<mode> or quad_<mode>@<phase>)");
}

std::vector<double> time_grid(const RunSettings& run) {
  std::vector<double> grid;
  const long long steps = std::llround(run.t_final / run.dt);
  const int intervals = run.grid_points - 1;
  for (int i = 0; i <= intervals; ++i) {
    const long long s = std::llround(static_cast<double>(steps) * i / intervals);
    grid.push_back(static_cast<double>(s) * run.dt);
  }
  return grid;
}

QuantumState initial_state(const RunConfig& config) {
  switch (config.initial.kind) {
    case InitialState::Kind::vacuum: {
      const std::vector<int> zeros(static_cast<std::size_t>(config.layout.n_modes()), 0);
      return basis_state(config.layout, zeros);
    }
    case InitialState::Kind::basis:
      return basis_state(config.layout, config.initial.occupations);
    case InitialState::Kind::coherent:
      return coherent_state(config.layout, config.initial.amplitudes);
  }
  throw std::logic_error("initial_state: unknown kind");
}

}  // namespace mposim
