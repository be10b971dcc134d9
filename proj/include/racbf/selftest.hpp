#pragma once

// Numeric self-verification: every fast path checked against an independent
// oracle on fixed-seed random instances.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "racbf/certificates.hpp"
#include "racbf/control.hpp"
#include "racbf/learning.hpp"
#include "racbf/numerics.hpp"
#include "racbf/oracles.hpp"
#include "racbf/plant.hpp"

namespace racbf {

struct SelftestRow {
  std::string name;
  bool passed = false;
  double worst = 0.0;
  double tolerance = 0.0;
  std::size_t samples = 0;
};

struct SelftestOptions {
  bool inject_fault = false;  // scales one analytic barrier gradient by 1.01
  std::uint64_t seed = 20240611;
};

namespace detail {

inline SelftestRow finish(std::string name, double worst, double tol, std::size_t samples) {
  return {std::move(name), worst <= tol, worst, tol, samples};
}

inline QpProblem random_feasible_qp(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0), slack(0.1, 1.0), tgt(-2.0, 2.0);
  std::uniform_int_distribution<int> ncons(1, 3);
  const Vector anchor{unit(rng), unit(rng)};
  QpProblem qp{{tgt(rng), tgt(rng)}, {}};
  const int k = ncons(rng);
  for (int i = 0; i < k; ++i) {
    Vector row{unit(rng), unit(rng)};
    if (row.norm() < 0.1) row = Vector{1.0, 0.0};
    qp.constraints.push_back({row, row.dot(anchor) - slack(rng)});
  }
  // Push the target outside so that constraints are usually active.
  qp.target = qp.target + 1.5 * (qp.target - anchor);
  return qp;
}

inline SelftestRow check_qp_grid(std::mt19937_64& rng) {
  double worst = 0.0;
  const int instances = 200;
  for (int i = 0; i < instances; ++i) {
    const QpProblem qp = random_feasible_qp(rng);
    const Vector u = solve_projection_qp(qp);
    double infeas = 0.0;
    for (const auto& c : qp.constraints) infeas = std::max(infeas, c.rhs - c.row.dot(u));
    // The optimum is no farther from the target than the solver's point, so this box contains it.
    const double radius = std::sqrt(2.0 * oracle::qp_objective(qp, u)) + 0.25;
    const auto grid = oracle::grid_qp_refined(qp, qp.target, radius);
    const double gap = oracle::qp_objective(qp, u) - grid.objective;  // > 0 means the grid beat the solver
    worst = std::max({worst, gap, infeas > 1e-8 ? infeas : 0.0});
  }
  return finish("qp_vs_grid", worst, 1e-6, instances);
}

inline SelftestRow check_qp_example() {
  const QpProblem qp{{0.0, 0.0}, {{{1.0, 0.0}, 1.0}, {{0.0, 1.0}, 1.0}}};
  const Vector u = solve_projection_qp(qp);
  const auto grid = oracle::grid_qp(qp, {0.0, 0.0}, 3.0, 0.001);
  const double worst = std::max((u - Vector{1.0, 1.0}).max_abs(), (u - grid.u).max_abs());
  return finish("qp_grid_example", worst, 1e-6, 1);
}

inline SelftestRow check_clf_closed_form(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  double worst = 0.0;
  const int instances = 200;
  for (int i = 0; i < instances; ++i) {
    LyapunovTerms terms{std::abs(g(rng)), g(rng), {g(rng), g(rng)}, {g(rng), g(rng)}};
    const Vector theta{g(rng), g(rng)};
    const double c3 = 0.5 + std::abs(g(rng));
    const Vector u = solve_es_aclf(terms, theta, c3);
    const double a = terms.lfv + terms.lyv.dot(theta) + c3 * terms.v;
    const Vector qp = solve_projection_qp({Vector(2), {{-terms.lgv, a}}});
    worst = std::max(worst, (u - qp).max_abs());
  }
  return finish("clf_closed_form_vs_qp", worst, 1e-8, instances);
}

inline SelftestRow check_eigen(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> e(-5.0, 5.0);
  double worst = 0.0;
  const int per_size = 100;
  for (int i = 0; i < per_size; ++i) {
    Matrix a2{{e(rng), 0.0}, {0.0, e(rng)}};
    a2(0, 1) = a2(1, 0) = e(rng);
    worst = std::max(worst, std::abs(min_eigenvalue(a2) - oracle::eigenvalues_2x2(a2)[0]));
    Matrix a3(3, 3);
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = r; c < 3; ++c) a3(r, c) = a3(c, r) = e(rng);
    worst = std::max(worst, std::abs(min_eigenvalue(a3) - oracle::eigenvalues_3x3(a3)[0]));
  }
  return finish("min_eigenvalue_vs_charpoly", worst, 1e-8, 2 * per_size);
}

struct CaseChains {
  Plant plant;
  std::vector<BarrierChain> chains;
  Vector lo, hi;  // state sampling box
};

inline std::vector<CaseChains> case_study_chains() {
  std::vector<CaseChains> out;
  Plant di = make_double_integrator(1.0);
  std::vector<BarrierChain> di_chains{make_disk_barrier("obstacle1", di.model, {-1.75, 2.0}, 0.5, 1.0, 1.0),
                                      make_disk_barrier("obstacle2", di.model, {-1.0, 0.5}, 0.5, 1.0, 1.0)};
  out.push_back({di, std::move(di_chains), {-3.0, -1.0, -2.0, -2.0}, {1.0, 3.0, 2.0, 2.0}});
  Plant pend = make_pendulum(0.7, 0.7);
  const double q = std::numbers::pi / 4.0;
  std::vector<BarrierChain> p_chains{make_halfspace_barrier("lower", pend.model, {1.0}, q, 5.0, 5.0),
                                     make_halfspace_barrier("upper", pend.model, {-1.0}, q, 5.0, 5.0)};
  out.push_back({pend, std::move(p_chains), {-1.2, -3.0}, {1.2, 3.0}});
  return out;
}

inline Vector sample_box(std::mt19937_64& rng, const Vector& lo, const Vector& hi) {
  Vector x(lo.size());
  for (std::size_t i = 0; i < lo.size(); ++i) x[i] = std::uniform_real_distribution<double>(lo[i], hi[i])(rng);
  return x;
}

inline double rel_gap(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

inline SelftestRow check_lie_fd(std::mt19937_64& rng, bool inject_fault) {
  double worst = 0.0;
  const int states = 500;
  std::size_t samples = 0;
  for (auto& cs : case_study_chains()) {
    const auto& sys = cs.plant.model;
    for (std::size_t ci = 0; ci < cs.chains.size(); ++ci) {
      const BarrierChain chain = inject_fault && ci == 0 ? cs.chains[ci].with_scaled_last_gradient(1.01) : cs.chains[ci];
      for (int s = 0; s < states; ++s) {
        const Vector x = sample_box(rng, cs.lo, cs.hi);
        const LieTerms a = lie_terms(chain, sys, x);
        const LieTerms fd = oracle::lie_terms_fd(cs.chains[ci], sys, x, cs.plant.theta_true);
        double gap = rel_gap(a.lf, fd.lf);
        for (std::size_t j = 0; j < a.ly.size(); ++j) gap = std::max(gap, rel_gap(a.ly[j], fd.ly[j]));
        for (std::size_t j = 0; j < a.lg.size(); ++j) gap = std::max(gap, rel_gap(a.lg[j], fd.lg[j]));
        worst = std::max(worst, gap);
        ++samples;
      }
    }
  }
  return finish("lie_derivatives_vs_fd", worst, 1e-4, samples);
}

inline SelftestRow check_relative_degree_samples(std::mt19937_64& rng) {
  double worst = 0.0;
  std::size_t samples = 0;
  bool top_ok = true;
  for (auto& cs : case_study_chains()) {
    std::vector<Vector> states;
    for (int s = 0; s < 500; ++s) states.push_back(sample_box(rng, cs.lo, cs.hi));
    const Vector ta = sample_box(rng, Vector(cs.plant.model.p(), -5.0), Vector(cs.plant.model.p(), 5.0));
    const Vector tb = sample_box(rng, Vector(cs.plant.model.p(), -5.0), Vector(cs.plant.model.p(), 5.0));
    for (const auto& chain : cs.chains) {
      const auto r = check_relative_degree(chain, cs.plant.model, states, ta, tb);
      worst = std::max({worst, r.max_lower_order_input_gain, r.max_lower_order_param_gain, r.max_theta_dependence});
      top_ok = top_ok && r.max_top_input_gain > 0.0;
      samples += states.size();
    }
  }
  return finish("relative_degree", top_ok ? worst : 1.0, 1e-12, samples);
}

inline SelftestRow check_lyapunov_fd(std::mt19937_64& rng) {
  const std::vector<Matrix> ps{Matrix{{2, 0, 1, 0}, {0, 2, 0, 1}, {1, 0, 1, 0}, {0, 1, 0, 1}},
                               Matrix{{1, 0.5}, {0.5, 0.5}}};
  double worst = 0.0;
  std::size_t samples = 0;
  for (const Matrix& p : ps) {
    const LyapunovSpec lyap(p, 1.0);
    for (int s = 0; s < 500; ++s) {
      const Vector x = sample_box(rng, Vector(p.rows(), -3.0), Vector(p.rows(), 3.0));
      const Vector g = lyap.gradient(x);
      for (std::size_t i = 0; i < x.size(); ++i) {
        Vector e(x.size());
        e[i] = 1.0;
        const double fd = oracle::directional_fd([&](const Vector& z) { return lyap.value(z); }, x, e, 1e-3);
        worst = std::max(worst, rel_gap(g[i], fd));
      }
      ++samples;
    }
  }
  return finish("lyapunov_gradient_vs_fd", worst, 1e-9, samples);
}

// On a frozen stack with exact residuals, θ̃ obeys θ̃' = −γΓΛθ̃; integrate the
// update laws and compare against the matrix exponential.
inline SelftestRow check_theta_dynamics(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 0.15);
  const std::size_t n = 4, p = 2;
  HistoryStack stack(20, p);
  const Vector theta{1.0, 1.0};
  for (int j = 0; j < 20; ++j) {
    HistoryEntry e{0.5 + 0.01 * j, Vector(n), Vector(n), Matrix(n, p), Vector(n)};
    for (std::size_t i = 0; i < n; ++i) {
      e.f[i] = g(rng);
      e.g[i] = g(rng);
      for (std::size_t k = 0; k < p; ++k) e.y(i, k) = g(rng);
    }
    e.dx = e.f + e.y * theta + e.g;
    stack.offer(e, e.t);
  }
  const Matrix lambda = stack.information_matrix();
  const double gamma = 10.0;
  const Matrix gain{{1.5, 0.3}, {0.3, 0.8}};
  const Vector hat0{0.0, 2.5};
  double worst = 0.0;
  for (int law = 0; law < 2; ++law) {
    Vector hat = hat0;
    const double dt = 1e-3;
    auto deriv = [&](double, const Vector& h) {
      return law == 0 ? cbf_update_rate(stack, h, gamma) : clf_update_rate(stack, h, Vector(p), gain, gamma);
    };
    const Matrix rate = law == 0 ? (-gamma) * lambda : (-gamma) * (gain * lambda);
    for (int k = 1; k <= 1000; ++k) {
      hat = rk4_step(deriv, hat, (k - 1) * dt, dt);
      if (k % 250 == 0) {
        const Vector expected = oracle::matrix_exponential(k * dt * rate) * (theta - hat0);
        const Vector got = theta - hat;
        worst = std::max(worst, (got - expected).norm() / std::max(expected.norm(), 1e-300));
      }
    }
  }
  return finish("theta_error_vs_expm", worst, 1e-4, 8);
}

}  // namespace detail

inline std::vector<SelftestRow> run_selftest(const SelftestOptions& opt = {}) {
  std::mt19937_64 rng(opt.seed);
  std::vector<SelftestRow> rows;
  rows.push_back(detail::check_qp_grid(rng));
  rows.push_back(detail::check_qp_example());
  rows.push_back(detail::check_clf_closed_form(rng));
  rows.push_back(detail::check_eigen(rng));
  rows.push_back(detail::check_lie_fd(rng, opt.inject_fault));
  rows.push_back(detail::check_relative_degree_samples(rng));
  rows.push_back(detail::check_lyapunov_fd(rng));
  rows.push_back(detail::check_theta_dynamics(rng));
  return rows;
}

inline std::string format_selftest(const std::vector<SelftestRow>& rows) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-28s %-4s %12s %10s %8s\n", "check", "", "worst", "tol", "samples");
  out += buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-28s %-4s %12.4e %10.1e %8zu\n", r.name.c_str(), r.passed ? "PASS" : "FAIL",
                  r.worst, r.tolerance, r.samples);
    out += buf;
  }
  return out;
}

inline bool selftest_passed(const std::vector<SelftestRow>& rows) {
  for (const auto& r : rows)
    if (!r.passed) return false;
  return true;
}

}  // namespace racbf
