#pragma once

// Closed-loop engine: plant, both estimators, window buffer, history stack and
// the configured controller, advanced with RK4 under a zero-order-held input.

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "racbf/certificates.hpp"
#include "racbf/control.hpp"
#include "racbf/errors.hpp"
#include "racbf/learning.hpp"
#include "racbf/numerics.hpp"
#include "racbf/plant.hpp"

namespace racbf {

struct SystemSpec {
  std::string kind = "double_integrator";  // or "pendulum"
  double mass = 1.0;
  double length = 0.7;
  std::optional<Vector> theta_true;  // factory default when absent
};

struct BarrierSpec {
  std::string label;
  std::string kind;  // "disk" or "halfspace"
  Vector center;
  double radius = 0.0;
  Vector coeffs;
  double offset = 0.0;
  std::vector<double> gains;  // k₁, k₂
};

struct LyapunovInput {
  Matrix P;
  std::optional<double> c3;
  // c₃ = q_scale · λmin(Q) / λmax(P) when c3 is absent.
  std::optional<double> q_scale;
  std::optional<Matrix> Q;

  double resolved_c3() const {
    if (c3) return *c3;
    if (q_scale && Q) return decay_rate_from_q(*q_scale, *Q, P);
    throw ValidationError("lyapunov: give either lyapunov.c3 or lyapunov.Q with lyapunov.Q_formula");
  }
};

/// How the input behaves between control updates.
enum class InputHold {
  zero_order,  // u computed at the step start and held over the step
  stagewise,   // feedback re-evaluated at every integrator stage
};

inline std::string_view to_string(InputHold h) { return h == InputHold::zero_order ? "zero_order" : "stagewise"; }

inline std::optional<InputHold> parse_input_hold(std::string_view s) {
  if (s == "zero_order") return InputHold::zero_order;
  if (s == "stagewise") return InputHold::stagewise;
  return std::nullopt;
}

/// How the window integrals of f, Y and g·u are formed.
enum class Quadrature {
  trapezoid,   // trapezoid rule on the step endpoints
  integrator,  // carried through the RK4 stages alongside x, so Δx = F + Yθ + G holds to roundoff
};

inline std::string_view to_string(Quadrature q) { return q == Quadrature::trapezoid ? "trapezoid" : "integrator"; }

inline std::optional<Quadrature> parse_quadrature(std::string_view s) {
  if (s == "trapezoid") return Quadrature::trapezoid;
  if (s == "integrator") return Quadrature::integrator;
  return std::nullopt;
}

struct StackSettings {
  std::size_t capacity = 20;
  double window = 0.5;
  std::size_t cadence = 10;  // integration steps between recording attempts
};

/// Expectations attached to a scenario; consumed by verify().
struct VerifyProfile {
  bool expect_safety_violation = false;
  std::optional<double> terminal_norm_max;
};

struct ScenarioConfig {
  std::string name = "scenario";
  SystemSpec system;
  std::vector<BarrierSpec> barriers;
  std::optional<LyapunovInput> lyapunov;
  ParamBox theta_box{{0.0, 0.0}, {3.0, 3.0}};
  Vector theta_hat0_cbf{0.0, 0.0};
  Vector theta_hat0_clf{0.0, 0.0};
  ControllerConfig controller;
  Vector x0;
  double dt = 1e-3;
  double duration = 20.0;
  InputHold hold = InputHold::stagewise;
  Quadrature quadrature = Quadrature::integrator;
  StackSettings stack;
  VerifyProfile verify;

  std::size_t step_count() const { return static_cast<std::size_t>(std::llround(duration / dt)); }
};

inline Plant build_plant(const SystemSpec& s) {
  if (s.kind == "double_integrator")
    return s.theta_true ? make_double_integrator(s.mass, *s.theta_true) : make_double_integrator(s.mass);
  if (s.kind == "pendulum")
    return s.theta_true ? make_pendulum(s.length, s.mass, *s.theta_true) : make_pendulum(s.length, s.mass);
  throw ValidationError("system.kind must be 'double_integrator' or 'pendulum', got '" + s.kind + "'");
}

inline BarrierChain build_barrier(const BarrierSpec& b, const UncertainAffineSystem& sys) {
  if (b.gains.size() != 2) throw ValidationError("barrier '" + b.label + "': gains must list k1, k2");
  if (b.kind == "disk") return make_disk_barrier(b.label, sys, b.center, b.radius, b.gains[0], b.gains[1]);
  if (b.kind == "halfspace") return make_halfspace_barrier(b.label, sys, b.coeffs, b.offset, b.gains[0], b.gains[1]);
  throw ValidationError("barrier '" + b.label + "': kind must be 'disk' or 'halfspace'");
}

/// Runtime objects assembled from a validated config.
struct Scenario {
  ScenarioConfig config;
  Plant plant;
  std::vector<BarrierChain> barriers;
  std::optional<LyapunovSpec> lyapunov;
  double vartheta_norm = 0.0;
};

inline bool mode_uses_clf(ControllerMode m) {
  return m == ControllerMode::aclf_only || m == ControllerMode::cascade || m == ControllerMode::relaxed_single_qp;
}

inline bool mode_uses_barriers(ControllerMode m) { return m != ControllerMode::aclf_only; }

inline Scenario build_scenario(const ScenarioConfig& cfg) {
  Plant plant = build_plant(cfg.system);
  const auto& sys = plant.model;
  const std::size_t p = sys.p();

  cfg.theta_box.validate();
  if (cfg.theta_box.dim() != p) throw ValidationError("theta.lower/theta.upper must have p components");
  if (cfg.theta_hat0_cbf.size() != p || cfg.theta_hat0_clf.size() != p)
    throw ValidationError("theta.hat0_cbf/theta.hat0_clf must have p components");
  if (!cfg.theta_box.contains(cfg.theta_hat0_cbf) || !cfg.theta_box.contains(cfg.theta_hat0_clf))
    throw ValidationError(
        "initial parameter estimates must lie in the parameter box Theta (the estimation-error envelope "
        "nu(t) is only certified for theta_hat(0) in Theta)");
  if (cfg.x0.size() != sys.n()) throw ValidationError("sim.x0 must have n components");
  if (!(cfg.dt > 0.0)) throw ValidationError("sim.dt must be positive");
  if (!(cfg.duration >= 0.0)) throw ValidationError("sim.duration must be nonnegative");
  if (cfg.stack.capacity == 0 || cfg.stack.cadence == 0 || !(cfg.stack.window > 0.0))
    throw ValidationError("stack.M, stack.cadence and stack.dT must be positive");
  cfg.controller.validate(p);

  Scenario sc{cfg, std::move(plant), {}, std::nullopt, worst_case_error(cfg.theta_box).norm()};
  for (const auto& b : cfg.barriers) sc.barriers.push_back(build_barrier(b, sc.plant.model));
  if (cfg.lyapunov) sc.lyapunov.emplace(cfg.lyapunov->P, cfg.lyapunov->resolved_c3());
  if (sc.lyapunov && sc.lyapunov->P().rows() != sys.n()) throw ValidationError("lyapunov.P must be n x n");
  if (mode_uses_clf(cfg.controller.mode) && !sc.lyapunov)
    throw ValidationError("controller mode '" + std::string(to_string(cfg.controller.mode)) + "' needs lyapunov.P");
  if (mode_uses_barriers(cfg.controller.mode) && sc.barriers.empty())
    throw ValidationError("controller mode '" + std::string(to_string(cfg.controller.mode)) + "' needs barriers");
  return sc;
}

/// One time-stamped snapshot of the closed loop.
struct TraceRow {
  double t = 0.0;
  Vector x;
  Vector u;
  std::vector<Vector> psi;  // per barrier, ψ₀..ψ_{r−1}
  double v = 0.0;
  double va = 0.0;
  Vector theta_hat_cbf;
  Vector theta_hat_clf;
  double err_cbf = 0.0;
  double err_clf = 0.0;
  double nu = 0.0;
  double lambda = 0.0;
  double lambda_int = 0.0;
  std::vector<std::string> active;
  double slack = 0.0;

  friend bool operator==(const TraceRow&, const TraceRow&) = default;
};

struct ControlDecision {
  Vector u;
  std::vector<SafetyConstraint> constraints;
  std::vector<std::string> active;
  double slack = 0.0;
};

class Simulator {
 public:
  explicit Simulator(const ScenarioConfig& cfg)
      : sc_(build_scenario(cfg)),
        x_(cfg.x0),
        theta_cbf_(cfg.theta_hat0_cbf),
        theta_clf_(cfg.theta_hat0_clf),
        gain_inv_(inverse(cfg.controller.gain)),
        buffer_(sc_.plant.model, cfg.stack.window),
        stack_(cfg.stack.capacity, sc_.plant.model.p()) {
    buffer_.push(0.0, x_, Vector(sc_.plant.model.m()));
  }

  const Scenario& scenario() const noexcept { return sc_; }
  std::size_t step_index() const noexcept { return k_; }
  double time() const noexcept { return static_cast<double>(k_) * sc_.config.dt; }
  const Vector& state() const noexcept { return x_; }
  const Vector& theta_hat_cbf() const noexcept { return theta_cbf_; }
  const Vector& theta_hat_clf() const noexcept { return theta_clf_; }
  const HistoryStack& stack() const noexcept { return stack_; }
  const WindowBuffer& buffer() const noexcept { return buffer_; }

  double nu() const { return nu_bound(stack_, sc_.vartheta_norm, sc_.config.controller.gamma, time()); }

  /// Control at the current state per the configured mode.
  ControlDecision decide() const {
    if (next_) return *next_;
    return decide_at(x_, theta_cbf_, theta_clf_, time());
  }

  /// Control for an arbitrary closed-loop state, with the stack as it is now.
  ControlDecision decide_at(const Vector& x, const Vector& theta_cbf, const Vector& theta_clf, double t) const {
    const auto& sys = sc_.plant.model;
    const auto& ctl = sc_.config.controller;
    ControlDecision d;
    const double nu = nu_bound(stack_, sc_.vartheta_norm, ctl.gamma, t);
    auto barrier_rows = [&](const Vector& theta, double buffer) {
      std::vector<SafetyConstraint> rows;
      for (const auto& b : sc_.barriers) rows.push_back(build_horacbf_constraint(b, sys, x, theta, buffer));
      return rows;
    };

    switch (ctl.mode) {
      case ControllerMode::aclf_only:
        d.u = solve_es_aclf(*sc_.lyapunov, sys, x, theta_clf);
        break;
      case ControllerMode::cascade:
        d.constraints = barrier_rows(theta_cbf, nu);
        d.u = solve_horacbf_qp(d.constraints, solve_es_aclf(*sc_.lyapunov, sys, x, theta_clf));
        break;
      case ControllerMode::relaxed_single_qp: {
        d.constraints = barrier_rows(theta_cbf, nu);
        const auto sol = solve_relaxed_single_qp(d.constraints, lyapunov_terms(*sc_.lyapunov, sys, x), theta_clf,
                                                 sc_.lyapunov->c3(), Vector(sys.m()), ctl.relax_weight);
        d.u = sol.u;
        d.slack = sol.slack;
        break;
      }
      case ControllerMode::cbf_open_loop:
        d.constraints = barrier_rows(theta_cbf, nu);
        d.u = solve_horacbf_qp(d.constraints, Vector(sys.m()));
        break;
      case ControllerMode::oracle_hocbf: {
        const Vector& theta = sc_.plant.theta_true;
        const Vector kd = sc_.lyapunov ? solve_es_aclf(*sc_.lyapunov, sys, x, theta) : Vector(sys.m());
        d.constraints = barrier_rows(theta, 0.0);
        d.u = solve_horacbf_qp(d.constraints, kd);
        break;
      }
    }
    for (const auto& c : d.constraints)
      if (std::abs(c.margin(d.u)) <= 1e-8 * (1.0 + std::abs(c.rhs))) d.active.push_back(c.label);
    return d;
  }

  TraceRow observe(const ControlDecision& d) const {
    const auto& sys = sc_.plant.model;
    TraceRow row;
    row.t = time();
    row.x = x_;
    row.u = d.u;
    for (const auto& b : sc_.barriers) row.psi.push_back(psi_values(b, sys, x_, theta_cbf_));
    const Vector err_cbf = sc_.plant.theta_true - theta_cbf_;
    const Vector err_clf = sc_.plant.theta_true - theta_clf_;
    if (sc_.lyapunov) {
      row.v = sc_.lyapunov->value(x_);
      row.va = row.v + 0.5 * err_clf.dot(gain_inv_ * err_clf);
    }
    row.theta_hat_cbf = theta_cbf_;
    row.theta_hat_clf = theta_clf_;
    row.err_cbf = err_cbf.norm();
    row.err_clf = err_clf.norm();
    row.nu = nu();
    row.lambda = stack_.lambda_min();
    row.lambda_int = stack_.lambda_integral_at(row.t);
    row.active = d.active;
    row.slack = d.slack;
    return row;
  }

  /// Integrates (x, θ̂_cbf, θ̂_clf) over one step with the stack frozen, then
  /// feeds the window buffer and, at the recording cadence, the stack. Under a
  /// zero-order hold `d.u` is applied throughout; otherwise the feedback is
  /// re-evaluated at each stage and `d` only supplies the step-start input.
  void advance(const ControlDecision& d) {
    const bool held = sc_.config.hold == InputHold::zero_order;
    const bool carry = sc_.config.quadrature == Quadrature::integrator;
    const auto& sys = sc_.plant.model;
    const auto& ctl = sc_.config.controller;
    const std::size_t n = sys.n(), p = sys.p();
    const std::size_t base = n + 2 * p;  // then ∫f (n), ∫Y row-major (n·p), ∫g·u (n)
    const Vector& theta_true = sc_.plant.theta_true;
    auto deriv = [&](double tau, const Vector& s) {
      const Vector x = s.segment(0, n);
      const Vector th_cbf = s.segment(n, p);
      const Vector th_clf = s.segment(n + p, p);
      const Vector lyv = sc_.lyapunov ? lyapunov_terms(*sc_.lyapunov, sys, x).lyv : Vector(p);
      const Vector u = held ? d.u : decide_at(x, th_cbf, th_clf, tau).u;
      Vector out(s.size());
      if (carry) {
        const Vector f = sys.drift(x);
        const Matrix y = sys.regressor(x);
        const Vector gu = sys.input_matrix(x) * u;
        out.set_segment(0, f + y * theta_true + gu);
        out.set_segment(base, f);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < p; ++j) out[base + n + i * p + j] = y(i, j);
        out.set_segment(base + n + n * p, gu);
      } else {
        out.set_segment(0, eval_dynamics(sys, x, theta_true, u));
      }
      out.set_segment(n, cbf_update_rate(stack_, th_cbf, ctl.gamma));
      out.set_segment(n + p, clf_update_rate(stack_, th_clf, lyv, ctl.gain, ctl.gamma));
      return out;
    };
    Vector s0 = concat({&x_, &theta_cbf_, &theta_clf_});
    if (carry) {
      Vector tail(2 * n + n * p);
      s0 = concat({&s0, &tail});
    }
    const Vector s = rk4_step(deriv, s0, time(), sc_.config.dt);
    x_ = s.segment(0, n);
    theta_cbf_ = s.segment(n, p);
    theta_clf_ = s.segment(n + p, p);
    ++k_;
    const double t = time();
    next_.reset();
    ControlDecision next;
    if (!held) next = decide();
    if (carry) {
      IntervalIntegrals iv{s.segment(base, n), Matrix(n, p), s.segment(base + n + n * p, n)};
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j) iv.y(i, j) = s[base + n + i * p + j];
      buffer_.push_interval(t, x_, std::move(iv));
    } else {
      buffer_.push(t, x_, d.u, held ? d.u : next.u);
    }
    if (!held) next_ = std::move(next);
    if (buffer_.full() && k_ % sc_.config.stack.cadence == 0) record_candidate(stack_, buffer_, t);
  }

  /// decide + advance.
  ControlDecision step() {
    ControlDecision d = decide();
    advance(d);
    return d;
  }

 private:
  Scenario sc_;
  Vector x_;
  Vector theta_cbf_;
  Vector theta_clf_;
  Matrix gain_inv_;
  WindowBuffer buffer_;
  HistoryStack stack_;
  std::size_t k_ = 0;
  std::optional<ControlDecision> next_;  // decision at the current state, computed for the buffer
};

enum class AbortKind { none, infeasible, numerical };

struct RunResult {
  std::vector<TraceRow> rows;
  AbortKind abort = AbortKind::none;
  std::string abort_reason;

  bool completed() const noexcept { return abort == AbortKind::none; }
};

/// Simulates [0, duration], one trace row per integration step (including both ends).
inline RunResult run(const ScenarioConfig& cfg) {
  Simulator sim(cfg);
  RunResult result;
  const std::size_t steps = cfg.step_count();
  result.rows.reserve(steps + 1);
  for (std::size_t k = 0;; ++k) {
    try {
      const ControlDecision d = sim.decide();
      result.rows.push_back(sim.observe(d));
      if (k == steps) break;
      sim.advance(d);
    } catch (const InfeasibleError& e) {
      result.abort = AbortKind::infeasible;
      result.abort_reason = "t = " + std::to_string(sim.time()) + ": " + e.what();
      // Diagnostic row at the failing state: zero input, conflicting barriers in `active`.
      if (result.rows.empty() || result.rows.back().t < sim.time()) {
        ControlDecision diag;
        diag.u = Vector(sim.scenario().plant.model.m());
        diag.active = e.culprits();
        result.rows.push_back(sim.observe(diag));
      }
      break;
    } catch (const NumericalError& e) {
      result.abort = AbortKind::numerical;
      result.abort_reason = e.what();
      break;
    }
  }
  return result;
}

}  // namespace racbf
