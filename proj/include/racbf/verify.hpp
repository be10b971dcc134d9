#pragma once

// Trace checks for the certified properties of a closed-loop run. Every check
// reports its worst margin; a negative margin means the check failed.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "racbf/control.hpp"
#include "racbf/numerics.hpp"
#include "racbf/sim.hpp"

namespace racbf {

struct CheckResult {
  std::string name;
  bool passed = false;
  double margin = 0.0;
  std::string detail;
};

struct VerdictReport {
  std::vector<CheckResult> checks;

  bool all_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
  }
  const CheckResult* find(const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return &c;
    return nullptr;
  }
  /// One line per check: name, PASS/FAIL, worst margin, detail.
  std::string to_text() const {
    std::string out;
    char buf[96];
    for (const auto& c : checks) {
      std::snprintf(buf, sizeof buf, "%-22s %s %.6e", c.name.c_str(), c.passed ? "PASS" : "FAIL", c.margin);
      out += buf;
      if (!c.detail.empty()) out += "  " + c.detail;
      out += '\n';
    }
    return out;
  }
};

struct VerifyTolerances {
  double envelope = 1e-6;
  double invariance = 1e-3;
  double va_increase = 1e-6;
  double exp_slack = 1e-3;
  double admissibility = 1e-8;
  double clf_decrement = 1e-8;
  double lambda_fraction = 0.9;  // λ̲ = fraction · final λ
};

/// Smallest ψ across all barriers and levels for one row.
inline double min_psi(const TraceRow& row) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& v : row.psi)
    for (std::size_t i = 0; i < v.size(); ++i) m = std::min(m, v[i]);
  return m;
}

/// Smallest ψ₀ across barriers for one row.
inline double min_h(const TraceRow& row) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& v : row.psi) m = std::min(m, v[0]);
  return m;
}

/// First time from which every ψ stays ≥ −tol until the end of the trace.
inline std::optional<double> attractivity_time(const std::vector<TraceRow>& rows, double tol) {
  std::optional<double> t_star;
  for (auto it = rows.rbegin(); it != rows.rend(); ++it) {
    if (min_psi(*it) < -tol) break;
    t_star = it->t;
  }
  return t_star;
}

namespace detail {

inline std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

inline CheckResult check_envelope(const std::vector<TraceRow>& rows, double tol) {
  double worst = std::numeric_limits<double>::infinity();
  double at = 0.0;
  for (const auto& r : rows) {
    const double m = r.nu + tol - r.err_cbf;
    if (m < worst) worst = m, at = r.t;
  }
  return {"envelope", worst >= 0.0, worst, fmt("worst at t = %.4f", at)};
}

inline CheckResult check_monotone(const std::vector<TraceRow>& rows) {
  // λ and ∫λ nondecreasing, ν nonincreasing, allowing accumulated roundoff.
  double worst = 0.0;
  for (std::size_t k = 1; k < rows.size(); ++k) {
    const auto &a = rows[k - 1], &b = rows[k];
    worst = std::min(worst, b.lambda - a.lambda);
    worst = std::min(worst, b.lambda_int - a.lambda_int + 1e-12 * (1.0 + a.lambda_int));
    worst = std::min(worst, a.nu - b.nu + 1e-12 * (1.0 + a.nu));
  }
  return {"monotone_learning", worst >= 0.0, worst, "lambda, lambda_int nondecreasing; nu nonincreasing"};
}

inline bool starts_safe(const TraceRow& first) { return min_psi(first) >= 0.0; }

}  // namespace detail

/// Runs every check that applies to the scenario's mode and verify profile.
inline VerdictReport verify(const std::vector<TraceRow>& rows, const Scenario& sc, const VerifyTolerances& tol = {}) {
  VerdictReport rep;
  if (rows.empty()) {
    rep.checks.push_back({"trace_nonempty", false, -1.0, "empty trace"});
    return rep;
  }
  const auto& cfg = sc.config;
  const auto& sys = sc.plant.model;
  const ControllerMode mode = cfg.controller.mode;

  rep.checks.push_back(detail::check_envelope(rows, tol.envelope));
  rep.checks.push_back(detail::check_monotone(rows));

  if (!sc.barriers.empty()) {
    const bool safe_start = detail::starts_safe(rows.front());
    double lowest = std::numeric_limits<double>::infinity();
    double at = 0.0;
    for (const auto& r : rows) {
      const double m = min_psi(r);
      if (m < lowest) lowest = m, at = r.t;
    }
    if (cfg.verify.expect_safety_violation) {
      const double margin = -tol.invariance - lowest;
      rep.checks.push_back({"safety_violation", margin > 0.0, margin, detail::fmt("min psi %.6g", lowest) +
                                                                          detail::fmt(" at t = %.4f", at)});
    } else if (safe_start) {
      const double margin = lowest + tol.invariance;
      rep.checks.push_back({"invariance", margin >= 0.0, margin, detail::fmt("min psi at t = %.4f", at)});
    } else {
      const auto t_star = attractivity_time(rows, tol.invariance);
      const double end = rows.back().t;
      rep.checks.push_back({"attractivity", t_star.has_value(), t_star ? end - *t_star : -1.0,
                            t_star ? detail::fmt("t* = %.4f", *t_star) : std::string("never reached")});
    }
  }

  if (mode != ControllerMode::aclf_only && !sc.barriers.empty()) {
    double worst = std::numeric_limits<double>::infinity();
    double at = 0.0;
    const bool oracle = mode == ControllerMode::oracle_hocbf;
    for (const auto& r : rows) {
      const Vector& theta = oracle ? sc.plant.theta_true : r.theta_hat_cbf;
      const double nu = oracle ? 0.0 : r.nu;
      for (const auto& b : sc.barriers) {
        const double m = build_horacbf_constraint(b, sys, r.x, theta, nu).margin(r.u) + tol.admissibility;
        if (m < worst) worst = m, at = r.t;
      }
    }
    rep.checks.push_back({"admissibility", worst >= 0.0, worst, detail::fmt("worst at t = %.4f", at)});
  }

  if (mode == ControllerMode::aclf_only && sc.lyapunov) {
    const auto& lyap = *sc.lyapunov;
    double worst = std::numeric_limits<double>::infinity();
    for (const auto& r : rows) {
      const auto terms = lyapunov_terms(lyap, sys, r.x);
      const double lhs = terms.lfv + terms.lyv.dot(r.theta_hat_clf) + terms.lgv.dot(r.u);
      worst = std::min(worst, -lyap.c3() * terms.v + tol.clf_decrement - lhs);
    }
    rep.checks.push_back({"clf_decrement", worst >= 0.0, worst, ""});

    double va_worst = std::numeric_limits<double>::infinity();
    double va_at = 0.0;
    for (std::size_t k = 1; k < rows.size(); ++k) {
      const double m = tol.va_increase - (rows[k].va - rows[k - 1].va);
      if (m < va_worst) va_worst = m, va_at = rows[k].t;
    }
    if (rows.size() < 2) va_worst = tol.va_increase;
    rep.checks.push_back({"va_nonincreasing", va_worst >= 0.0, va_worst, detail::fmt("worst at t = %.4f", va_at)});

    // Exponential envelope on z = (x, θ̃_clf) once the information level λ̲ is reached.
    const double lam_final = rows.back().lambda;
    if (!(lam_final > 0.0)) {
      rep.checks.push_back({"exponential_bound", false, -1.0, "stack never became informative"});
    } else {
      const double lam_low = tol.lambda_fraction * lam_final;
      std::size_t start = 0;
      while (rows[start].lambda < lam_low) ++start;
      const Matrix gain_inv = inverse(cfg.controller.gain);
      const double eta1 = std::min(lyap.c1(), 0.5 * min_eigenvalue(gain_inv));
      const double eta2 = std::max(lyap.c2(), 0.5 * max_eigenvalue(gain_inv));
      const double eta3 = std::min(cfg.controller.gamma * lam_low, lyap.c1() * lyap.c3());
      auto znorm = [](const TraceRow& r) { return std::sqrt(r.x.squared_norm() + r.err_clf * r.err_clf); };
      const double t0 = rows[start].t;
      const double z0 = znorm(rows[start]);
      const double scale = std::sqrt(eta2 / eta1) * z0 * (1.0 + tol.exp_slack);
      double worst_rel = std::numeric_limits<double>::infinity();
      for (std::size_t k = start; k < rows.size(); ++k) {
        const double bound = scale * std::exp(-eta3 * (rows[k].t - t0) / (2.0 * eta2));
        worst_rel = std::min(worst_rel, (bound - znorm(rows[k])) / std::max(bound, 1e-300));
      }
      rep.checks.push_back({"exponential_bound", worst_rel >= 0.0, worst_rel,
                            detail::fmt("T = %.4f", t0) + detail::fmt(" rate %.6g", eta3 / (2.0 * eta2))});
    }
  }

  if (cfg.verify.terminal_norm_max) {
    const double nx = rows.back().x.norm();
    const double m = *cfg.verify.terminal_norm_max - nx;
    rep.checks.push_back({"terminal_norm", m >= 0.0, m, detail::fmt("|x(end)| = %.6g", nx)});
  }
  return rep;
}

}  // namespace racbf
