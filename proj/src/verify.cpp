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

#include "mposim/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "mposim/rng.hpp"

namespace mposim {

namespace {

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(10);
  os << x;
  return os.str();
}

std::string state_label(const ModeLayout& layout, std::size_t idx) {
  std::ostringstream os;
  os << "e(";
  const auto occ = layout.occupations(idx);
  for (std::size_t k = 0; k < occ.size(); ++k) {
    if (k == static_cast<std::size_t>(layout.n_sub())) os << ';';
    else if (k > 0) os << ',';
    os << occ[k];
  }
  os << ')';
  return os.str();
}

std::string ladder_label(const ModeLayout& layout, int mode, bool raise) {
  return layout.mode_name(mode) + (raise ? "^dag" : "");
}

double frequency(const ModelParams& params, const ModeLayout& layout, int mode) {
  return layout.is_pump(mode) ? params.wp.at(static_cast<std::size_t>(mode - layout.n_sub()))
                              : params.ws.at(static_cast<std::size_t>(mode));
}

std::vector<std::size_t> interior_states(const ModeLayout& layout, int margin) {
  const OperatorMatrix p = interior_projector(layout, margin);
  std::vector<std::size_t> idx;
  idx.reserve(p.nnz());
  for (const auto& e : p.entries()) idx.push_back(e.row);
  return idx;
}

// Largest |entry| of `op` restricted to columns in the interior; returns (value, row, col).
struct WorstEntry {
  double value = 0.0;
  std::size_t row = 0;
  std::size_t col = 0;
};

WorstEntry worst_entry(const OperatorMatrix& op) {
  WorstEntry w;
  for (const auto& e : op.entries()) {
    if (std::abs(e.value) > w.value) w = {std::abs(e.value), e.row, e.col};
  }
  return w;
}

void finish(CheckReport& r) {
  r.pass = r.margin >= 0.0 && r.violations == 0;
}

}  // namespace

double L0(double q, double eps, int n, int m) {
  if (!(eps > 0.0)) throw std::invalid_argument("L0: eps must be positive");
  const double p = std::pow(q, 2 * (n + m));
  if (!std::isfinite(p)) return 0.0;
  const double den = 1.0 + eps * p;
  return p / (den * den);
}

double admissible_eps_bound(const ModelParams& params) {
  double r = 0.0;
  for (double w : params.ws) r = std::max(r, std::abs(w));
  for (double w : params.wp) r = std::max(r, std::abs(w));
  const auto k = static_cast<int>(params.ws.size() + params.wp.size());
  return 1.0 / (2.0 * std::pow(r, 2 * k));
}

std::vector<double> lemma_rk_grid(double r, int k, double x_max, double step) {
  if (!(r > 0.0) || k < 1 || !(step > 0.0) || !(x_max >= 0.0)) {
    throw std::invalid_argument("lemma_rk_grid: need r > 0, k >= 1, step > 0, x_max >= 0");
  }
  std::vector<double> grid;
  const auto count = static_cast<std::size_t>(std::floor(x_max / step));
  grid.reserve(count + 2010);
  for (std::size_t i = 0; i <= count; ++i) grid.push_back(static_cast<double>(i) * step);
  const double c = std::pow(2.0, 2.0 * k / (2.0 * k - 1.0));
  const double x_m = c * r / (c - 1.0);
  grid.push_back(r);
  grid.push_back(2.0 * r);
  grid.push_back(x_m);
  for (int i = -1000; i <= 1000; ++i) grid.push_back(std::max(0.0, x_m + 1e-5 * r * i));
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

CheckReport lemma_rk_check(double r, int k, double eps, std::span<const double> grid) {
  if (!(r > 0.0) || k < 1 || !(eps > 0.0)) throw std::invalid_argument("lemma_rk_check: need r > 0, k >= 1, eps > 0");
  const double limit = std::pow(16.0, k);
  auto ratio = [&](double x) {
    const double num = 1.0 + eps * std::pow(x, 2 * k);
    const double den = 1.0 + eps * std::pow(x - r, 2 * k);
    const double v = num / den;
    return v * v;
  };
  CheckReport rep;
  rep.name = "lemma_rk";
  rep.tolerance = limit * 1e-12;
  std::vector<double> xs(grid.begin(), grid.end());
  std::sort(xs.begin(), xs.end());
  if (!xs.empty() && xs.front() < 0.0) throw std::invalid_argument("lemma_rk_check: grid must lie in [0, inf)");
  std::size_t best = 0;
  double worst = -1.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double v = ratio(xs[i]);
    if (v > limit + rep.tolerance) ++rep.violations;
    if (v > worst) {
      worst = v;
      best = i;
    }
  }
  rep.checked = xs.size();
  if (xs.empty()) {
    rep.location = "empty grid";
    return rep;
  }
  // golden-section polish between the neighbours of the best grid point
  double lo = xs[best > 0 ? best - 1 : best];
  double hi = xs[best + 1 < xs.size() ? best + 1 : best];
  double x_best = xs[best];
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = hi - phi * (hi - lo);
  double d = lo + phi * (hi - lo);
  for (int it = 0; it < 100 && hi - lo > 1e-14 * std::max(1.0, hi); ++it) {
    if (ratio(c) > ratio(d)) {
      hi = d;
    } else {
      lo = c;
    }
    c = hi - phi * (hi - lo);
    d = lo + phi * (hi - lo);
  }
  const double x_ref = 0.5 * (lo + hi);
  if (ratio(x_ref) > worst) {
    worst = ratio(x_ref);
    x_best = x_ref;
  }
  const double cc = std::pow(2.0, 2.0 * k / (2.0 * k - 1.0));
  const double x_m = cc * r / (cc - 1.0);
  rep.worst = worst;
  rep.margin = limit - worst;
  if (worst > limit + rep.tolerance) rep.margin = std::min(rep.margin, -rep.tolerance);
  else rep.margin = std::max(rep.margin, 0.0);
  rep.location = "x=" + fmt(x_best);
  rep.detail = "r=" + fmt(r) + " k=" + std::to_string(k) + " eps=" + fmt(eps) + " limit 16^k=" + fmt(limit) +
               " ratio(x_M=" + fmt(x_m) + ")=" + fmt(ratio(x_m)) + " eps bound 1/(2r^2k)=" +
               fmt(1.0 / (2.0 * std::pow(r, 2 * k)));
  finish(rep);
  return rep;
}

std::vector<CheckReport> scriptL_bound_check(const ModelParams& params, const ModeLayout& layout, double eps,
                                             int margin, double tol) {
  const double eps_max = admissible_eps_bound(params);
  if (!(eps > 0.0) || !(eps < eps_max)) {
    throw std::invalid_argument("scriptL_bound_check: eps=" + fmt(eps) + " outside the admissible range (0, " +
                                fmt(eps_max) + ") = (0, 1/(2 r^{2(n+m)}))");
  }
  const int n = layout.n_sub();
  const int m = layout.n_pump();
  const Eigen::VectorXd q = number_spectrum(params, layout);
  Eigen::VectorXd c_diag(q.size());
  for (Eigen::Index i = 0; i < q.size(); ++i) c_diag[i] = L0(q[i], eps, n, m);
  const OperatorMatrix c_eps = OperatorMatrix::diagonal(c_diag);
  const double limit = std::pow(32.0, n + m);
  const auto states = interior_states(layout, margin);

  CheckReport closed;
  closed.name = "scriptL_closed_form";
  closed.tolerance = tol;
  closed.excluded_dim = layout.dim() - states.size();
  CheckReport bound;
  bound.name = "scriptL_bound";
  bound.tolerance = 1e-12;
  bound.excluded_dim = closed.excluded_dim;
  bound.margin = std::numeric_limits<double>::infinity();
  double worst_ratio = 0.0;
  bool violations_at_vacuum_only = true;

  using ColMajor = Eigen::SparseMatrix<Complex, Eigen::ColMajor>;
  for (int mode = 0; mode < layout.n_modes(); ++mode) {
    const double w = frequency(params, layout, mode);
    for (bool raise : {false, true}) {
      const OperatorMatrix x = raise ? creation(layout, mode) : annihilation(layout, mode);
      const ColMajor xc(x.sparse());
      const ColMajor comm(commutator(c_eps, x).sparse());
      const std::string label = ladder_label(layout, mode, raise);
      for (std::size_t e : states) {
        const auto col = static_cast<Eigen::Index>(e);
        Complex value(0.0, 0.0);
        for (ColMajor::InnerIterator it(xc, col); it; ++it) value += std::conj(it.value()) * comm.coeff(it.row(), col);
        const int s = layout.occupation(e, mode);
        const double qe = q[col];
        const double closed_form = raise ? (s + 1) * (L0(qe + w, eps, n, m) - L0(qe, eps, n, m))
                                         : s * (L0(qe - w, eps, n, m) - L0(qe, eps, n, m));
        const double diff = std::abs(value - closed_form);
        ++closed.checked;
        if (diff > tol) ++closed.violations;
        if (closed.location.empty() || diff > closed.worst) {
          closed.worst = diff;
          closed.location = label + " on " + state_label(layout, e) + ", q=" + fmt(qe);
        }

        const double allowed = limit * c_diag[col];
        const double measured = std::abs(value);
        const double slack = allowed - measured;
        ++bound.checked;
        if (measured > allowed * (1.0 + bound.tolerance)) {
          ++bound.violations;
          if (qe != 0.0) violations_at_vacuum_only = false;
        }
        if (c_diag[col] > 0.0) worst_ratio = std::max(worst_ratio, measured / c_diag[col]);
        if (slack < bound.margin) {
          bound.margin = slack;
          bound.worst = measured;
          bound.location = label + " on " + state_label(layout, e) + ", q=" + fmt(qe) + ", 32^(n+m) L0(q)=" +
                           fmt(allowed);
        }
      }
    }
  }
  closed.margin = tol - closed.worst;
  finish(closed);
  if (bound.violations == 0) bound.margin = std::max(bound.margin, 0.0);
  bound.detail = "eps=" + fmt(eps) + " max |L|/L0 over L0>0: " + fmt(worst_ratio) + " (limit " + fmt(limit) + ")";
  if (bound.violations > 0) {
    bound.detail += violations_at_vacuum_only ? "; every violation sits at q=0 where L0(q)=0"
                                              : "; violations away from q=0";
  }
  finish(bound);
  return {closed, bound};
}

CheckReport fN_intertwine_check(const ModeLayout& layout, const ModelParams& params,
                                const std::function<double(double)>& f, int margin, double tol) {
  const Eigen::VectorXd q = number_spectrum(params, layout);
  const OperatorMatrix proj = interior_projector(layout, margin);
  auto f_shifted = [&](double shift) {
    Eigen::VectorXd v(q.size());
    for (Eigen::Index i = 0; i < q.size(); ++i) v[i] = f(q[i] + shift);
    return OperatorMatrix::diagonal(v);
  };
  const OperatorMatrix f_n = f_shifted(0.0);
  CheckReport rep;
  rep.name = "fN_intertwine";
  rep.tolerance = tol;
  rep.excluded_dim = layout.dim() - proj.nnz();
  rep.location = "none";
  for (int mode = 0; mode < layout.n_modes(); ++mode) {
    const double w = frequency(params, layout, mode);
    for (bool raise : {false, true}) {
      const OperatorMatrix x = raise ? creation(layout, mode) : annihilation(layout, mode);
      const OperatorMatrix residual = (x * f_n - f_shifted(raise ? -w : w) * x) * proj;
      const WorstEntry we = worst_entry(residual);
      ++rep.checked;
      if (we.value > tol) ++rep.violations;
      if (we.value > rep.worst) {
        rep.worst = we.value;
        rep.location = ladder_label(layout, mode, raise) + " column " + state_label(layout, we.col);
      }
    }
  }
  rep.margin = tol - rep.worst;
  finish(rep);
  return rep;
}

std::vector<CheckReport> HN_commute_check(const ModelParams& params, const ModeLayout& layout, int margin, double tol,
                                          double detune) {
  const OperatorMatrix proj = interior_projector(layout, margin);
  CheckReport main;
  main.name = "HN_commute";
  main.tolerance = tol;
  main.excluded_dim = layout.dim() - proj.nnz();
  main.checked = proj.nnz();
  const WorstEntry we = worst_entry(commutator(hamiltonian(params, layout), total_number(params, layout)) * proj);
  main.worst = we.value;
  main.margin = tol - we.value;
  main.violations = we.value > tol ? 1 : 0;
  main.location = we.value > 0.0 ? "column " + state_label(layout, we.col) : "none (exact zero)";
  finish(main);

  ModelParams off = params;
  off.wp.at(0) += detune;
  const OperatorMatrix inter = interaction(layout) * proj;
  double smallest = std::numeric_limits<double>::infinity();
  for (const auto& e : inter.entries()) smallest = std::min(smallest, std::abs(e.value));
  const double expected = std::abs(detune) * std::abs(params.g) / 2.0 * smallest;
  const WorstEntry wc = worst_entry(commutator(hamiltonian_unchecked(off, layout), total_number(off, layout)) * proj);
  CheckReport control;
  control.name = "HN_off_resonance_control";
  control.tolerance = expected;
  control.excluded_dim = main.excluded_dim;
  control.checked = proj.nnz();
  control.worst = wc.value;
  control.margin = wc.value - expected * (1.0 - 1e-12);
  control.violations = control.margin < 0.0 ? 1 : 0;
  control.location = "column " + state_label(layout, wc.col);
  control.detail = "wp[0] shifted by " + fmt(detune) + "; expected residual >= " + fmt(expected);
  finish(control);
  return {main, control};
}

std::vector<CheckReport> hypothesis_suite(const HPCoefficients& hp, const ModelParams& params,
                                          const ModeLayout& layout, const HypothesisOptions& options) {
  const std::size_t d = hp.R.size();
  if (hp.N.size() != d || static_cast<std::size_t>(hp.S.rows()) != d || static_cast<std::size_t>(hp.S.cols()) != d) {
    throw std::invalid_argument("hypothesis_suite: R, N and S sizes disagree");
  }
  const auto states = interior_states(layout, options.margin);
  if (states.empty()) throw std::invalid_argument("hypothesis_suite: empty interior");
  const std::size_t excluded = layout.dim() - states.size();
  const auto dim = static_cast<Eigen::Index>(layout.dim());
  std::vector<CheckReport> out;

  {
    CheckReport rep;
    rep.name = "hyp2_S_unitary";
    rep.tolerance = options.tol;
    const Matrix eye = Matrix::Identity(hp.S.rows(), hp.S.cols());
    const double a = (hp.S.adjoint() * hp.S - eye).cwiseAbs().maxCoeff();
    const double b = (hp.S * hp.S.adjoint() - eye).cwiseAbs().maxCoeff();
    rep.worst = std::max(a, b);
    rep.checked = 2;
    rep.violations = rep.worst > options.tol ? 1 : 0;
    rep.margin = options.tol - rep.worst;
    rep.location = a >= b ? "S^* S" : "S S^*";
    finish(rep);
    out.push_back(rep);
  }

  std::vector<Vector> samples;
  samples.reserve(static_cast<std::size_t>(options.n_samples));
  for (int j = 0; j < options.n_samples; ++j) {
    StepRng rng(options.seed, static_cast<std::uint64_t>(j), 0x68797000u);
    Vector u = Vector::Zero(dim);
    for (std::size_t e : states) {
      const double re = rng.normal();
      const double im = rng.normal();
      u[static_cast<Eigen::Index>(e)] = Complex(re, im);
    }
    u.normalize();
    samples.push_back(std::move(u));
  }

  auto dissipation = [&](const std::string& name, const OperatorMatrix& k, auto&& channel) {
    CheckReport rep;
    rep.name = name;
    rep.tolerance = options.tol;
    rep.excluded_dim = excluded;
    rep.location = "none";
    for (std::size_t j = 0; j < samples.size(); ++j) {
      const Vector& u = samples[j];
      double lhs = 2.0 * (k.apply(u)).dot(u).real();
      for (std::size_t c = 0; c < d; ++c) lhs += channel(c).apply(u).squaredNorm();
      const double res = std::abs(lhs);
      ++rep.checked;
      if (res > options.tol) ++rep.violations;
      if (res >= rep.worst) {
        rep.worst = res;
        rep.location = "sample " + std::to_string(j);
      }
    }
    rep.margin = options.tol - rep.worst;
    finish(rep);
    out.push_back(rep);
  };
  dissipation("hyp6_K", hp.K, [&](std::size_t c) -> const OperatorMatrix& { return hp.R[c]; });
  std::vector<OperatorMatrix> n_adj;
  n_adj.reserve(d);
  for (const auto& nk : hp.N) n_adj.push_back(nk.adjoint());
  dissipation("hyp6_Kstar", hp.K.adjoint(), [&](std::size_t c) -> const OperatorMatrix& { return n_adj[c]; });

  {
    CheckReport rep;
    rep.name = "hyp7_N_equals_minus_R_adjoint";
    rep.tolerance = 0.0;
    rep.location = "none";
    for (std::size_t i = 0; i < d; ++i) {
      OperatorMatrix sum = n_adj[i];
      for (std::size_t k = 0; k < d; ++k) {
        const Complex s = std::conj(hp.S(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)));
        if (s != Complex(0.0, 0.0)) sum = sum + hp.R[k].scaled(s);
      }
      const double res = sum.max_abs();
      ++rep.checked;
      if (res > 0.0) ++rep.violations;
      if (res > rep.worst) {
        rep.worst = res;
        const auto [block, local] = ChannelSet::block_position(i, layout.n_sub(), layout.n_pump());
        rep.location = "channel " + std::to_string(i + 1) + " (block " + std::to_string(block) + ", entry " +
                       std::to_string(local + 1) + ")";
      }
    }
    rep.margin = 0.0 - rep.worst;
    finish(rep);
    out.push_back(rep);
  }

  {
    double k1 = 0.0;
    double k2 = 0.0;
    for (std::size_t l = 0; l < params.alpha.size(); ++l) {
      for (const Complex a : params.alpha[l]) {
        k1 = std::max(k1, std::norm(a));
        if (l >= 6) k2 += std::norm(a);
      }
    }
    const Eigen::VectorXd q = number_spectrum(params, layout);
    OperatorMatrix z = OperatorMatrix::zero(layout.dim());
    for (const auto& r : hp.R) z = z + r.adjoint() * r;
    CheckReport rep;
    rep.name = "QZ_domination";
    rep.tolerance = 1e-12;
    rep.excluded_dim = excluded;
    rep.margin = std::numeric_limits<double>::infinity();
    auto test = [&](double zq, double qq, const std::string& where) {
      const double slack = qq - zq;
      ++rep.checked;
      if (slack < -rep.tolerance * std::max(1.0, qq)) ++rep.violations;
      if (slack < rep.margin) {
        rep.margin = slack;
        rep.worst = zq;
        rep.location = where;
      }
    };
    for (std::size_t e : states) {
      const auto i = static_cast<Eigen::Index>(e);
      test(z.coeff(e, e).real(), k1 * q[i] + k2, state_label(layout, e));
    }
    for (std::size_t j = 0; j < samples.size(); ++j) {
      const Vector& u = samples[j];
      double qu = 0.0;
      for (Eigen::Index i = 0; i < dim; ++i) qu += std::norm(u[i]) * (k1 * q[i] + k2);
      test(u.dot(z.apply(u)).real(), qu, "sample " + std::to_string(j));
    }
    if (rep.violations == 0) rep.margin = std::max(rep.margin, 0.0);
    rep.detail = "k1=" + fmt(k1) + " k2=" + fmt(k2);
    finish(rep);
    out.push_back(rep);
  }
  return out;
}

std::vector<CheckReport> hypothesis_suite(const ModelParams& params, const ModeLayout& layout,
                                          const HypothesisOptions& options) {
  return hypothesis_suite(hp_coefficients(params, layout), params, layout, options);
}

std::vector<CheckReport> default_suite(const ModelParams& params, const ModeLayout& layout,
                                       const VerifyOptions& options) {
  validate(params, layout);
  const int n = layout.n_sub();
  const int m = layout.n_pump();
  const double eps = options.eps > 0.0 ? options.eps : 0.5 * admissible_eps_bound(params);
  double r = 0.0;
  for (double w : params.ws) r = std::max(r, std::abs(w));
  for (double w : params.wp) r = std::max(r, std::abs(w));

  std::vector<CheckReport> out;
  const auto grid = lemma_rk_grid(r, n + m, std::max(100.0, 4.0 * r), options.grid_step);
  out.push_back(lemma_rk_check(r, n + m, eps, grid));
  for (auto& rep : scriptL_bound_check(params, layout, eps, options.margin)) out.push_back(std::move(rep));
  out.push_back(fN_intertwine_check(layout, params, [&](double x) { return L0(x, eps, n, m); }, options.margin));
  for (auto& rep : HN_commute_check(params, layout, options.margin)) out.push_back(std::move(rep));
  HypothesisOptions hyp = options.hypotheses;
  hyp.margin = options.margin;
  for (auto& rep : hypothesis_suite(params, layout, hyp)) out.push_back(std::move(rep));

  const CompatibilityReport compat = measurement_compatibility_check(params, layout);
  CheckReport rep;
  rep.name = "measurement_compatibility";
  rep.tolerance = 1e-12;
  rep.checked = 1;
  rep.worst = compat.worst;
  rep.margin = rep.tolerance - compat.worst;
  rep.violations = compat.pass ? 0 : 1;
  rep.location = compat.pass ? "none"
                             : compat.violation + " between observables " + std::to_string(compat.first) + " and " +
                                   std::to_string(compat.second) + " at t=" + fmt(compat.time);
  finish(rep);
  out.push_back(rep);
  return out;
}

bool all_pass(std::span<const CheckReport> reports) {
  return std::all_of(reports.begin(), reports.end(), [](const CheckReport& r) { return r.pass; });
}

}  // namespace mposim
