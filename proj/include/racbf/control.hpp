#pragma once

// Pointwise controllers: the min-norm adaptive CLF law, the robust adaptive
// high-order CBF filter, and their combinations.

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "racbf/certificates.hpp"
#include "racbf/errors.hpp"
#include "racbf/numerics.hpp"
#include "racbf/plant.hpp"

namespace racbf {

/// row · u ≥ rhs, rebuilt at every control step.
struct SafetyConstraint {
  Vector row;
  double rhs = 0.0;
  std::string label;

  double margin(const Vector& u) const { return row.dot(u) - rhs; }
};

enum class ControllerMode {
  aclf_only,          // ES-aCLF QP alone
  cascade,            // ES-aCLF output used as the nominal input of the HO-RaCBF QP
  relaxed_single_qp,  // one QP, hard barrier rows plus a slackened CLF row
  cbf_open_loop,      // HO-RaCBF QP with k_d ≡ 0
  oracle_hocbf,       // HOCBF with the true parameters and no buffer
};

inline std::string_view to_string(ControllerMode mode) {
  switch (mode) {
    case ControllerMode::aclf_only: return "aclf_only";
    case ControllerMode::cascade: return "cascade";
    case ControllerMode::relaxed_single_qp: return "relaxed_single_qp";
    case ControllerMode::cbf_open_loop: return "cbf_open_loop";
    case ControllerMode::oracle_hocbf: return "oracle_hocbf";
  }
  return "unknown";
}

inline std::optional<ControllerMode> parse_controller_mode(std::string_view s) {
  for (ControllerMode m : {ControllerMode::aclf_only, ControllerMode::cascade, ControllerMode::relaxed_single_qp,
                           ControllerMode::cbf_open_loop, ControllerMode::oracle_hocbf})
    if (to_string(m) == s) return m;
  return std::nullopt;
}

struct ControllerConfig {
  ControllerMode mode = ControllerMode::cascade;
  double gamma = 10.0;
  Matrix gain = Matrix::identity(2);  // Γ
  double relax_weight = 1e3;

  void validate(std::size_t p) const {
    if (gamma < 0.0) throw ValidationError("controller: gamma must be nonnegative");
    if (gain.rows() != p || gain.cols() != p) throw ValidationError("controller: Gamma must be p x p");
    if (!gain.is_symmetric(1e-10) || !(min_eigenvalue(gain) > 0.0))
      throw ValidationError("controller: Gamma must be symmetric positive definite");
    if (mode == ControllerMode::relaxed_single_qp && !(relax_weight > 0.0))
      throw ValidationError("controller: relax_weight must be positive in relaxed_single_qp mode");
  }
};

/// L_fψ + L_Yψθ̂ + L_gψu ≥ −α_r(ψ_{r−1}) + ‖L_Yψ‖ν, written as row·u ≥ rhs.
inline SafetyConstraint build_horacbf_constraint(const BarrierChain& b, const UncertainAffineSystem& sys,
                                                 const Vector& x, const Vector& theta_hat, double nu) {
  if (nu < 0.0) throw ValidationError("build_horacbf_constraint: nu must be nonnegative");
  if (theta_hat.size() != sys.p()) throw DimensionError("build_horacbf_constraint: theta_hat has wrong dimension");
  const LieTerms lie = lie_terms(b, sys, x);
  const double psi_last = psi_values(b, sys, x, theta_hat)[b.order() - 1];
  const double rhs = -lie.lf - lie.ly.dot(theta_hat) - b.alpha(b.order() - 1, psi_last) + lie.ly.norm() * nu;
  return {lie.lg, rhs, b.label()};
}

namespace detail {

inline double clf_violation(const LyapunovTerms& terms, const Vector& theta_hat, double c3) {
  return terms.lfv + terms.lyv.dot(theta_hat) + c3 * terms.v;
}

}  // namespace detail

/// Closed-form min-norm input with L_fV + L_YVθ̂ + L_gVu ≤ −c₃V: zero when the
/// decrease already holds, otherwise the smallest correction along L_gV.
inline Vector solve_es_aclf(const LyapunovTerms& terms, const Vector& theta_hat, double c3) {
  if (theta_hat.size() != terms.lyv.size()) throw DimensionError("solve_es_aclf: theta_hat has wrong dimension");
  const double a = detail::clf_violation(terms, theta_hat, c3);
  const Vector& b = terms.lgv;
  if (a <= 0.0) return Vector(b.size());
  const double bb = b.squared_norm();
  if (std::sqrt(bb) < 1e-10) throw InfeasibleError("solve_es_aclf: CLF decrease cannot be enforced (L_gV = 0)");
  return (-a / bb) * b;
}

inline Vector solve_es_aclf(const LyapunovSpec& lyap, const UncertainAffineSystem& sys, const Vector& x,
                            const Vector& theta_hat) {
  try {
    return solve_es_aclf(lyapunov_terms(lyap, sys, x), theta_hat, lyap.c3());
  } catch (const InfeasibleError& e) {
    std::string where = " at x = (";
    for (std::size_t i = 0; i < x.size(); ++i) where += (i ? ", " : "") + std::to_string(x[i]);
    throw InfeasibleError(std::string(e.what()) + where + ")");
  }
}

namespace detail {

inline InfeasibleError barrier_conflict(std::span<const SafetyConstraint> constraints, const char* what) {
  std::vector<std::string> labels;
  std::string msg = std::string(what) + ": barrier constraints conflict:";
  for (const auto& c : constraints) {
    labels.push_back(c.label);
    msg += " " + c.label;
  }
  return InfeasibleError(msg, std::move(labels));
}

}  // namespace detail

/// Minimally invasive projection of k_d onto the barrier halfspaces.
inline Vector solve_horacbf_qp(std::span<const SafetyConstraint> constraints, const Vector& kd) {
  QpProblem qp{kd, {}};
  for (const auto& c : constraints) qp.constraints.push_back({c.row, c.rhs});
  try {
    return solve_projection_qp(qp);
  } catch (const InfeasibleError&) {
    throw detail::barrier_conflict(constraints, "solve_horacbf_qp");
  }
}

struct RelaxedSolution {
  Vector u;
  double slack = 0.0;
};

/// min ½‖u − k_d‖² + w δ²  s.t. barrier rows, L_fV + L_YVθ̂ + L_gVu ≤ −c₃V + δ, δ ≥ 0.
///
/// With δ' = √(2w) δ the objective becomes a plain projection of (k_d, 0) in
/// (u, δ') space, so the same exact QP applies.
inline RelaxedSolution solve_relaxed_single_qp(std::span<const SafetyConstraint> constraints,
                                               const LyapunovTerms& terms, const Vector& theta_hat, double c3,
                                               const Vector& kd, double relax_weight) {
  if (!(relax_weight > 0.0)) throw ValidationError("solve_relaxed_single_qp: relax_weight must be positive");
  const std::size_t m = kd.size();
  if (terms.lgv.size() != m) throw DimensionError("solve_relaxed_single_qp: L_gV has wrong dimension");
  const double scale = std::sqrt(2.0 * relax_weight);

  QpProblem qp;
  qp.target = Vector(m + 1);
  qp.target.set_segment(0, kd);
  for (const auto& c : constraints) {
    if (c.row.size() != m) throw DimensionError("solve_relaxed_single_qp: barrier row has wrong dimension");
    Vector row(m + 1);
    row.set_segment(0, c.row);
    qp.constraints.push_back({std::move(row), c.rhs});
  }
  Vector clf_row(m + 1);
  clf_row.set_segment(0, -terms.lgv);
  clf_row[m] = 1.0 / scale;
  qp.constraints.push_back({std::move(clf_row), detail::clf_violation(terms, theta_hat, c3)});
  Vector slack_row(m + 1);
  slack_row[m] = 1.0;
  qp.constraints.push_back({std::move(slack_row), 0.0});

  try {
    const Vector z = solve_projection_qp(qp);
    return {z.segment(0, m), z[m] / scale};
  } catch (const InfeasibleError&) {
    throw detail::barrier_conflict(constraints, "solve_relaxed_single_qp");
  }
}

/// HOCBF filter that knows θ exactly: no adaptation, no robustness buffer.
inline Vector oracle_hocbf(std::span<const BarrierChain> chains, const UncertainAffineSystem& sys, const Vector& x,
                           const Vector& theta_true, const Vector& kd) {
  std::vector<SafetyConstraint> rows;
  rows.reserve(chains.size());
  for (const auto& b : chains) rows.push_back(build_horacbf_constraint(b, sys, x, theta_true, 0.0));
  return solve_horacbf_qp(rows, kd);
}

}  // namespace racbf
