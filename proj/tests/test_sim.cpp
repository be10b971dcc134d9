#include <gtest/gtest.h>

#include <cmath>
#include <string>

#include "racbf/scenario_io.hpp"
#include "racbf/sim.hpp"
#include "racbf/verify.hpp"

using namespace racbf;

namespace {

ScenarioConfig bundled(const std::string& name) { return load_scenario(std::string(RACBF_SCENARIO_DIR) + "/" + name); }

}  // namespace

TEST(Simulator, TruthWithoutBufferLeavesDeepInteriorUntouched) {
  ScenarioConfig cfg = bundled("di_adaptive.cfg");
  cfg.controller.mode = ControllerMode::cbf_open_loop;
  cfg.theta_box = {Vector{1.0, 1.0}, Vector{1.0, 1.0}};  // known parameters, ν ≡ 0
  cfg.theta_hat0_cbf = cfg.theta_hat0_clf = Vector{1.0, 1.0};
  cfg.x0 = Vector{2.0, -2.0, 0.1, 0.2};
  cfg.hold = InputHold::zero_order;
  Simulator sim(cfg);
  const ControlDecision d = sim.decide();
  EXPECT_EQ(d.u, Vector(2));
  EXPECT_TRUE(d.active.empty());
  sim.advance(d);
  // drift only: v(t) = v₀e^{−t}, q(t) = q₀ + v₀(1 − e^{−t})
  const double t = cfg.dt;
  const Vector expect{2.0 + 0.1 * (1 - std::exp(-t)), -2.0 + 0.2 * (1 - std::exp(-t)), 0.1 * std::exp(-t),
                      0.2 * std::exp(-t)};
  EXPECT_LT((sim.state() - expect).max_abs(), 1e-14);
}

TEST(Simulator, FirstStepMatchesHandRk4) {
  ScenarioConfig cfg = bundled("di_adaptive.cfg");
  cfg.hold = InputHold::zero_order;
  Simulator sim(cfg);
  const Vector x0 = cfg.x0;
  // CLF at rest: LfV = LYV = 0, a = c₃V = 25, LgV = 2(Px)_vel = (−5, 5) ⇒ k_d = (2.5, −2.5).
  const Vector kd{2.5, -2.5};
  // Obstacle 1 row (−1.5, 1), rhs −k₂ψ₁ = −0.5625 is violated by k_d; obstacle 2 is not.
  const Vector row{-1.5, 1.0};
  const double rhs = -0.5625;
  const Vector u0 = kd + ((rhs - row.dot(kd)) / row.squared_norm()) * row;
  const ControlDecision d = sim.decide();
  EXPECT_LT((d.u - u0).max_abs(), 1e-12);
  ASSERT_EQ(d.active.size(), 1u);
  EXPECT_EQ(d.active[0], "obs1");

  // Plant with θ = (1, 1), m = 1: ẋ = (v, u − v). θ̂_clf rate = Γ·Yᵀ∇V = −2 diag(v)·(Px)_vel.
  const Matrix P{{2, 0, 1, 0}, {0, 2, 0, 1}, {1, 0, 1, 0}, {0, 1, 0, 1}};
  auto xdot = [&](const Vector& x) { return Vector{x[2], x[3], u0[0] - x[2], u0[1] - x[3]}; };
  auto thdot = [&](const Vector& x) {
    const Vector px = P * x;
    return Vector{-2.0 * x[2] * px[2], -2.0 * x[3] * px[3]};
  };
  const double h = cfg.dt;
  const Vector k1 = xdot(x0), s1 = thdot(x0);
  const Vector x2 = x0 + (h / 2) * k1;
  const Vector k2 = xdot(x2), s2 = thdot(x2);
  const Vector x3 = x0 + (h / 2) * k2;
  const Vector k3 = xdot(x3), s3 = thdot(x3);
  const Vector x4 = x0 + h * k3;
  const Vector k4 = xdot(x4), s4 = thdot(x4);
  const Vector x1 = x0 + (h / 6) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  const Vector th1 = cfg.theta_hat0_clf + (h / 6) * (s1 + 2.0 * s2 + 2.0 * s3 + s4);
  sim.advance(d);
  EXPECT_LT((sim.state() - x1).max_abs(), 1e-15);
  EXPECT_LT((sim.theta_hat_clf() - th1).max_abs(), 1e-15);
  EXPECT_EQ(sim.theta_hat_cbf(), cfg.theta_hat0_cbf);  // empty stack
}

TEST(Run, ZeroDurationIsSingleRow) {
  ScenarioConfig cfg = bundled("di_adaptive.cfg");
  cfg.duration = 0.0;
  const RunResult r = run(cfg);
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.rows[0].t, 0.0);
  EXPECT_EQ(r.rows[0].x, cfg.x0);
}

TEST(Run, FrozenEstimatorWhenGammaIsZero) {
  ScenarioConfig cfg = bundled("di_robust.cfg");
  cfg.duration = 3.0;
  const RunResult r = run(cfg);
  ASSERT_TRUE(r.completed());
  for (const auto& row : r.rows) {
    EXPECT_EQ(row.theta_hat_cbf, cfg.theta_hat0_cbf);
    EXPECT_EQ(row.nu, r.rows.front().nu);
  }
  const auto rep = verify(r.rows, build_scenario(cfg));
  ASSERT_NE(rep.find("envelope"), nullptr);
  EXPECT_TRUE(rep.find("envelope")->passed);
}

TEST(Run, Deterministic) {
  ScenarioConfig cfg = bundled("pendulum_cascade.cfg");
  cfg.duration = 2.0;
  const RunResult a = run(cfg), b = run(cfg);
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t k = 0; k < a.rows.size(); ++k) ASSERT_EQ(a.rows[k], b.rows[k]) << "row " << k;
}

TEST(Run, TraceRowsAreFiniteAndMonotone) {
  ScenarioConfig cfg = bundled("di_adaptive.cfg");
  cfg.duration = 4.0;
  const RunResult r = run(cfg);
  ASSERT_TRUE(r.completed());
  EXPECT_EQ(r.rows.size(), 4001u);
  for (std::size_t k = 1; k < r.rows.size(); ++k) {
    const auto& a = r.rows[k - 1];
    const auto& b = r.rows[k];
    EXPECT_TRUE(b.x.is_finite());
    EXPECT_GE(b.lambda, a.lambda);
    EXPECT_GE(b.lambda_int, a.lambda_int);
    EXPECT_LE(b.nu, a.nu);
  }
}

TEST(Run, PendulumCascadeTracesAreAdmissible) {
  ScenarioConfig cfg = bundled("pendulum_cascade.cfg");
  cfg.duration = 3.0;
  const RunResult r = run(cfg);
  ASSERT_TRUE(r.completed());
  const auto rep = verify(r.rows, build_scenario(cfg));
  EXPECT_TRUE(rep.find("admissibility")->passed) << rep.to_text();
  EXPECT_TRUE(rep.find("invariance")->passed) << rep.to_text();
}

TEST(Run, InfeasibleStartAborts) {
  // Centered estimates start the open-loop pendulum with a buffer too large to satisfy.
  ScenarioConfig cfg = bundled("pendulum_open_loop.cfg");
  cfg.theta_hat0_cbf = cfg.theta_hat0_clf = Vector{10.0, 1.5};
  const RunResult r = run(cfg);
  EXPECT_EQ(r.abort, AbortKind::infeasible);
  EXPECT_NE(r.abort_reason.find("lower"), std::string::npos);
  EXPECT_FALSE(r.rows.empty());
}

TEST(Verify, InjectedBarrierDipFailsInvariance) {
  ScenarioConfig cfg = bundled("pendulum_cascade.cfg");
  cfg.duration = 1.0;
  RunResult r = run(cfg);
  const Scenario sc = build_scenario(cfg);
  ASSERT_TRUE(verify(r.rows, sc).find("invariance")->passed);
  r.rows[500].psi[0][0] = -0.01;
  const auto rep = verify(r.rows, sc);
  EXPECT_FALSE(rep.find("invariance")->passed);
  EXPECT_FALSE(rep.all_passed());
}

TEST(Verify, InjectedEnvelopeBreachFails) {
  ScenarioConfig cfg = bundled("pendulum_cascade.cfg");
  cfg.duration = 1.0;
  RunResult r = run(cfg);
  r.rows[200].err_cbf = r.rows[200].nu + 1e-3;
  EXPECT_FALSE(verify(r.rows, build_scenario(cfg)).find("envelope")->passed);
}

TEST(Verify, EmptyTraceFails) {
  const ScenarioConfig cfg = bundled("di_adaptive.cfg");
  EXPECT_FALSE(verify({}, build_scenario(cfg)).all_passed());
}

TEST(BuildScenario, RejectsEstimateOutsideBox) {
  ScenarioConfig cfg = bundled("pendulum_cascade.cfg");
  cfg.theta_hat0_cbf = Vector{0.0, 0.0};
  EXPECT_THROW(build_scenario(cfg), ValidationError);
  cfg = bundled("pendulum_cascade.cfg");
  cfg.dt = 0.0;
  EXPECT_THROW(build_scenario(cfg), ValidationError);
}
