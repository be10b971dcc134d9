#pragma once

// Barrier chains ψ₀ = h, ψᵢ = ψ̇ᵢ₋₁ + kᵢψᵢ₋₁ with hand-derived gradients, and
// quadratic Lyapunov certificates V = xᵀPx.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "racbf/errors.hpp"
#include "racbf/numerics.hpp"
#include "racbf/plant.hpp"

namespace racbf {

/// A safety constraint h(x) ≥ 0 of relative degree r together with its
/// high-order chain. Class-K functions are linear, αᵢ(s) = kᵢ·s.
///
/// `gradients[i]` is ∇ψᵢ for i = 0..r−1. Every ψᵢ with i < r is assumed to be
/// independent of θ (the uncertainty enters at the same order as the input),
/// so the gradients take the state only; check_relative_degree() tests this.
class BarrierChain {
 public:
  using ScalarField = std::function<double(const Vector&)>;
  using GradientField = std::function<Vector(const Vector&)>;

  BarrierChain(std::string label, ScalarField h, std::vector<GradientField> gradients, std::vector<double> gains)
      : label_(std::move(label)), h_(std::move(h)), gradients_(std::move(gradients)), gains_(std::move(gains)) {
    if (gradients_.empty()) throw ValidationError("barrier '" + label_ + "': order must be at least 1");
    if (gains_.size() != gradients_.size())
      throw ValidationError("barrier '" + label_ + "': need one class-K gain per chain level");
    for (double k : gains_)
      if (!(k > 0.0)) throw ValidationError("barrier '" + label_ + "': class-K gains must be positive");
    if (label_.find_first_of(",|\n") != std::string::npos)
      throw ValidationError("barrier label may not contain ',', '|' or newlines");
  }

  const std::string& label() const noexcept { return label_; }
  std::size_t order() const noexcept { return gradients_.size(); }
  const std::vector<double>& gains() const noexcept { return gains_; }
  double alpha(std::size_t level, double s) const { return gains_.at(level) * s; }

  double h(const Vector& x) const { return h_(x); }
  Vector gradient(std::size_t level, const Vector& x) const { return gradients_.at(level)(x); }
  Vector grad_psi_last(const Vector& x) const { return gradients_.back()(x); }

  /// Copy whose last-level gradient is multiplied by `factor` (fault injection for the oracles).
  BarrierChain with_scaled_last_gradient(double factor) const {
    BarrierChain copy = *this;
    GradientField original = copy.gradients_.back();
    copy.gradients_.back() = [original, factor](const Vector& x) { return factor * original(x); };
    return copy;
  }

 private:
  std::string label_;
  ScalarField h_;
  std::vector<GradientField> gradients_;
  std::vector<double> gains_;
};

/// (ψ₀(x), …, ψ_{r−1}(x)) evaluated with parameters θ.
inline Vector psi_values(const BarrierChain& b, const UncertainAffineSystem& sys, const Vector& x, const Vector& theta) {
  sys.require_state(x);
  if (theta.size() != sys.p()) throw DimensionError("psi_values: theta has wrong dimension");
  Vector psi(b.order());
  psi[0] = b.h(x);
  if (b.order() == 1) return psi;
  const Vector unforced = sys.drift(x) + sys.regressor(x) * theta;
  for (std::size_t i = 1; i < b.order(); ++i) {
    const Vector grad = b.gradient(i - 1, x);
    if (grad.size() != sys.n()) throw DimensionError("psi_values: gradient has wrong dimension");
    psi[i] = grad.dot(unforced) + b.alpha(i - 1, psi[i - 1]);
  }
  return psi;
}

struct LieTerms {
  double lf = 0.0;
  Vector ly;
  Vector lg;
};

/// Lie derivatives of ψ_{r−1} along f, the columns of Y and the columns of g.
inline LieTerms lie_terms(const BarrierChain& b, const UncertainAffineSystem& sys, const Vector& x) {
  sys.require_state(x);
  const Vector grad = b.grad_psi_last(x);
  if (grad.size() != sys.n()) throw DimensionError("lie_terms: gradient has wrong dimension");
  return {grad.dot(sys.drift(x)), transpose_times(sys.regressor(x), grad),
          transpose_times(sys.input_matrix(x), grad)};
}

/// Second-order chain for a constraint on the configuration of a mechanical
/// system whose positions integrate their velocities. `hess` is ∇²h in q.
inline BarrierChain make_position_barrier(std::string label, const UncertainAffineSystem& sys,
                                          std::function<double(const Vector&)> h_q,
                                          std::function<Vector(const Vector&)> grad_q,
                                          std::function<Matrix(const Vector&)> hess_q, double k1, double k2) {
  const ConfigurationLayout layout = sys.layout();
  if (layout.position.empty() || layout.position.size() != layout.velocity.size())
    throw ValidationError("position barrier needs a system with a position/velocity layout");
  const std::size_t n = sys.n();
  auto q_of = [layout](const Vector& x) {
    Vector q(layout.position.size());
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = x[layout.position[i]];
    return q;
  };
  auto v_of = [layout](const Vector& x) {
    Vector v(layout.velocity.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = x[layout.velocity[i]];
    return v;
  };
  auto h = [h_q, q_of](const Vector& x) { return h_q(q_of(x)); };
  auto grad0 = [grad_q, q_of, layout, n](const Vector& x) {
    const Vector gq = grad_q(q_of(x));
    Vector g(n);
    for (std::size_t i = 0; i < gq.size(); ++i) g[layout.position[i]] = gq[i];
    return g;
  };
  // ψ₁ = ∇h(q)·v + k₁h(q);  ∂ψ₁/∂q = ∇²h v + k₁∇h,  ∂ψ₁/∂v = ∇h.
  auto grad1 = [grad_q, hess_q, q_of, v_of, layout, n, k1](const Vector& x) {
    const Vector q = q_of(x);
    const Vector gq = grad_q(q);
    const Vector dq = hess_q(q) * v_of(x) + k1 * gq;
    Vector g(n);
    for (std::size_t i = 0; i < gq.size(); ++i) {
      g[layout.position[i]] = dq[i];
      g[layout.velocity[i]] = gq[i];
    }
    return g;
  };
  return BarrierChain(std::move(label), h, {grad0, grad1}, {k1, k2});
}

/// h = ‖q − center‖² − radius² (stay outside a disk).
inline BarrierChain make_disk_barrier(std::string label, const UncertainAffineSystem& sys, Vector center,
                                      double radius, double k1, double k2) {
  if (!(radius > 0.0)) throw ValidationError("disk barrier '" + label + "': radius must be positive");
  if (center.size() != sys.layout().position.size())
    throw DimensionError("disk barrier '" + label + "': center dimension does not match configuration");
  const double r2 = radius * radius;
  auto h = [center, r2](const Vector& q) { return (q - center).squared_norm() - r2; };
  auto grad = [center](const Vector& q) { return 2.0 * (q - center); };
  auto hess = [dim = center.size()](const Vector&) { return 2.0 * Matrix::identity(dim); };
  return make_position_barrier(std::move(label), sys, h, grad, hess, k1, k2);
}

/// h = c·q + d (stay on one side of a hyperplane in configuration space).
inline BarrierChain make_halfspace_barrier(std::string label, const UncertainAffineSystem& sys, Vector coeffs,
                                           double offset, double k1, double k2) {
  if (coeffs.size() != sys.layout().position.size())
    throw DimensionError("halfspace barrier '" + label + "': coefficient dimension does not match configuration");
  if (coeffs.max_abs() == 0.0) throw ValidationError("halfspace barrier '" + label + "': zero normal");
  auto h = [coeffs, offset](const Vector& q) { return coeffs.dot(q) + offset; };
  auto grad = [coeffs](const Vector&) { return coeffs; };
  auto hess = [dim = coeffs.size()](const Vector&) { return Matrix(dim, dim); };
  return make_position_barrier(std::move(label), sys, h, grad, hess, k1, k2);
}

/// Quadratic Lyapunov candidate V = xᵀPx with c₁ = λmin(P), c₂ = λmax(P) and decay rate c₃.
class LyapunovSpec {
 public:
  LyapunovSpec(Matrix p, double c3) : p_(std::move(p)), c3_(c3) {
    if (!p_.is_square() || !p_.is_symmetric(1e-10)) throw ValidationError("LyapunovSpec: P must be symmetric");
    const Vector eig = symmetric_eigenvalues(p_);
    c1_ = eig[0];
    c2_ = eig[eig.size() - 1];
    if (!(c1_ > 0.0)) throw ValidationError("LyapunovSpec: P must be positive definite");
    if (!(c3_ > 0.0)) throw ValidationError("LyapunovSpec: c3 must be positive");
  }

  const Matrix& P() const noexcept { return p_; }
  double c1() const noexcept { return c1_; }
  double c2() const noexcept { return c2_; }
  double c3() const noexcept { return c3_; }

  double value(const Vector& x) const { return x.dot(p_ * x); }
  Vector gradient(const Vector& x) const { return 2.0 * (p_ * x); }

 private:
  Matrix p_;
  double c1_ = 0.0, c2_ = 0.0, c3_ = 0.0;
};

/// c₃ = scale · λmin(Q) / λmax(P).
inline double decay_rate_from_q(double scale, const Matrix& q, const Matrix& p) {
  if (!(scale > 0.0)) throw ValidationError("decay-rate scale must be positive");
  const double qmin = min_eigenvalue(q);
  if (!(qmin > 0.0)) throw ValidationError("Q must be positive definite");
  return scale * qmin / max_eigenvalue(p);
}

struct LyapunovTerms {
  double v = 0.0;
  double lfv = 0.0;
  Vector lyv;
  Vector lgv;
};

inline LyapunovTerms lyapunov_terms(const LyapunovSpec& lyap, const UncertainAffineSystem& sys, const Vector& x) {
  sys.require_state(x);
  if (lyap.P().rows() != sys.n()) throw DimensionError("lyapunov_terms: P does not match the state dimension");
  const Vector grad = lyap.gradient(x);
  return {lyap.value(x), grad.dot(sys.drift(x)), transpose_times(sys.regressor(x), grad),
          transpose_times(sys.input_matrix(x), grad)};
}

struct GradientCheckReport {
  double max_relative_error = 0.0;
  bool passed = true;
  std::size_t samples = 0;
};

namespace detail {

inline constexpr double kFdStep = 1e-6;

template <typename Scalar>
Vector central_gradient(Scalar&& fn, const Vector& x) {
  Vector g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    Vector hi = x, lo = x;
    hi[i] += kFdStep;
    lo[i] -= kFdStep;
    g[i] = (fn(hi) - fn(lo)) / (2.0 * kFdStep);
  }
  return g;
}

inline double relative_gap(const Vector& analytic, const Vector& numeric) {
  return (analytic - numeric).max_abs() / std::max(1.0, numeric.max_abs());
}

}  // namespace detail

/// Compares every analytic chain gradient with central differences of the
/// corresponding ψ-level (step 1e-6).
inline GradientCheckReport fd_check(const BarrierChain& b, const UncertainAffineSystem& sys,
                                    std::span<const Vector> states, double tolerance = 1e-4) {
  GradientCheckReport report;
  const Vector theta(sys.p());
  for (const Vector& x : states) {
    for (std::size_t level = 0; level < b.order(); ++level) {
      auto psi_level = [&](const Vector& s) { return psi_values(b, sys, s, theta)[level]; };
      const double gap = detail::relative_gap(b.gradient(level, x), detail::central_gradient(psi_level, x));
      report.max_relative_error = std::max(report.max_relative_error, gap);
    }
    ++report.samples;
  }
  report.passed = report.max_relative_error < tolerance;
  return report;
}

inline GradientCheckReport fd_check(const LyapunovSpec& lyap, std::span<const Vector> states,
                                    double tolerance = 1e-4) {
  GradientCheckReport report;
  for (const Vector& x : states) {
    auto v = [&](const Vector& s) { return lyap.value(s); };
    report.max_relative_error =
        std::max(report.max_relative_error, detail::relative_gap(lyap.gradient(x), detail::central_gradient(v, x)));
    ++report.samples;
  }
  report.passed = report.max_relative_error < tolerance;
  return report;
}

struct RelativeDegreeReport {
  double max_lower_order_input_gain = 0.0;      // max |L_g ψᵢ|, i < r−1
  double max_lower_order_param_gain = 0.0;      // max |L_Y ψᵢ|, i < r−1
  double max_theta_dependence = 0.0;            // max |ψ(x; θa) − ψ(x; θb)|
  double max_top_input_gain = 0.0;              // max ‖L_g ψ_{r−1}‖ over the samples
  bool holds(double tol = 1e-12) const {
    return max_lower_order_input_gain < tol && max_lower_order_param_gain < tol && max_theta_dependence < tol &&
           max_top_input_gain > 0.0;
  }
};

/// Samples the structural assumption that neither u nor θ appears before level r.
inline RelativeDegreeReport check_relative_degree(const BarrierChain& b, const UncertainAffineSystem& sys,
                                                  std::span<const Vector> states, const Vector& theta_a,
                                                  const Vector& theta_b) {
  RelativeDegreeReport report;
  for (const Vector& x : states) {
    const Matrix y = sys.regressor(x);
    const Matrix g = sys.input_matrix(x);
    for (std::size_t level = 0; level + 1 < b.order(); ++level) {
      const Vector grad = b.gradient(level, x);
      report.max_lower_order_input_gain = std::max(report.max_lower_order_input_gain, transpose_times(g, grad).max_abs());
      report.max_lower_order_param_gain = std::max(report.max_lower_order_param_gain, transpose_times(y, grad).max_abs());
    }
    report.max_theta_dependence = std::max(
        report.max_theta_dependence, (psi_values(b, sys, x, theta_a) - psi_values(b, sys, x, theta_b)).max_abs());
    report.max_top_input_gain = std::max(report.max_top_input_gain, transpose_times(g, b.grad_psi_last(x)).norm());
  }
  return report;
}

}  // namespace racbf
