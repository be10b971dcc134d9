#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "racbf/learning.hpp"

using namespace racbf;

namespace {

HistoryEntry synthetic_entry(const Matrix& y, const Vector& residual_at_zero, double t = 0.0) {
  // Δx − F − Yθ − G = residual_at_zero − Yθ
  const std::size_t n = y.rows();
  return HistoryEntry{t, residual_at_zero, Vector(n), y, Vector(n)};
}

// e^{−sA} for symmetric 2×2 A from its analytic eigen-decomposition.
Matrix expm_neg_sym2(const Matrix& a, double s) {
  const double tr = a(0, 0) + a(1, 1), diff = a(0, 0) - a(1, 1);
  const double disc = std::sqrt(diff * diff + 4 * a(0, 1) * a(0, 1));
  const double l1 = 0.5 * (tr - disc), l2 = 0.5 * (tr + disc);
  double vx = a(0, 1), vy = l1 - a(0, 0);
  if (std::hypot(vx, vy) < 1e-14) vx = 1.0, vy = 0.0;
  const double nrm = std::hypot(vx, vy);
  vx /= nrm, vy /= nrm;
  const double e1 = std::exp(-s * l1), e2 = std::exp(-s * l2);
  // V diag(e1, e2) Vᵀ with V = [[vx, −vy], [vy, vx]]
  return Matrix{{e1 * vx * vx + e2 * vy * vy, (e1 - e2) * vx * vy}, {(e1 - e2) * vx * vy, e1 * vy * vy + e2 * vx * vx}};
}

}  // namespace

TEST(HistoryStack, FillPhaseAccepts) {
  HistoryStack st(20, 2);
  EXPECT_TRUE(st.offer(synthetic_entry(Matrix{{1.0, 0.0}}, Vector{0.0}), 0.0));
  EXPECT_EQ(st.size(), 1u);
}

TEST(HistoryStack, FullStackRejectsDuplicate) {
  HistoryStack st(2, 2);
  st.offer(synthetic_entry(Matrix{{1.0, 0.0}}, Vector{0.0}), 0.0);
  st.offer(synthetic_entry(Matrix{{0.0, 1.0}}, Vector{0.0}), 0.1);
  const double before = st.lambda_min();
  EXPECT_FALSE(st.offer(synthetic_entry(Matrix{{0.0, 1.0}}, Vector{0.0}), 0.2));
  EXPECT_EQ(st.lambda_min(), before);
}

TEST(HistoryStack, RankCompletionRaisesLambda) {
  HistoryStack st(2, 2);
  st.offer(synthetic_entry(Matrix{{1.0, 0.0}}, Vector{0.0}), 0.0);
  st.offer(synthetic_entry(Matrix{{1.0, 0.0}}, Vector{0.0}), 0.1);
  EXPECT_EQ(st.lambda_min(), 0.0);
  EXPECT_TRUE(st.offer(synthetic_entry(Matrix{{0.0, 1.0}}, Vector{0.0}), 0.2));
  // Λ = diag(1, 1)
  EXPECT_NEAR(st.lambda_min(), 1.0, 1e-14);
  EXPECT_NEAR(st.information_matrix()(0, 1), 0.0, 1e-15);
}

TEST(HistoryStack, LambdaNeverDecreasesUnderRandomOffers) {
  std::mt19937_64 rng(29);
  std::normal_distribution<double> d;
  HistoryStack st(5, 2);
  double prev = 0.0, prev_int = 0.0;
  for (int k = 0; k < 300; ++k) {
    Matrix y(3, 2);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 2; ++j) y(i, j) = d(rng);
    st.offer(synthetic_entry(y, Vector(3)), 0.01 * k);
    EXPECT_GE(st.lambda_min(), prev);
    EXPECT_GE(st.lambda_integral_at(0.01 * k), prev_int);
    prev = st.lambda_min();
    prev_int = st.lambda_integral_at(0.01 * k);
  }
}

TEST(HistoryStack, LambdaIntegralIsPiecewiseExact) {
  HistoryStack st(4, 2);
  st.offer(synthetic_entry(Matrix::identity(2), Vector(2)), 1.0);  // λ = 1 from t = 1
  st.offer(synthetic_entry(Matrix::identity(2), Vector(2)), 3.0);  // λ = 2 from t = 3
  EXPECT_NEAR(st.lambda_integral_at(5.0), 2.0 * 1.0 + 2.0 * 2.0, 1e-14);
}

TEST(UpdateLaws, EmptyStack) {
  HistoryStack st(20, 2);
  EXPECT_EQ(cbf_update_rate(st, Vector{1.0, 2.0}, 10.0), Vector(2));
  EXPECT_EQ(clf_update_rate(st, Vector{1.0, 2.0}, Vector(2), Matrix::identity(2), 10.0), Vector(2));
  EXPECT_EQ(clf_update_rate(st, Vector{1.0, 2.0}, Vector{3.0, -1.0}, Matrix::identity(2), 10.0), (Vector{3.0, -1.0}));
}

TEST(UpdateLaws, SingleEntryHandSum) {
  // Y = I, θ = (1, 0), θ̂ = 0 ⇒ residual = Yθ̃ = (1, 0) and γYᵀ(·) = (10, 0)
  HistoryStack st(20, 2);
  const Vector theta{1.0, 0.0};
  st.offer(synthetic_entry(Matrix::identity(2), theta), 0.0);
  EXPECT_EQ(cbf_update_rate(st, Vector(2), 10.0), (Vector{10.0, 0.0}));
  EXPECT_EQ(clf_update_rate(st, Vector(2), Vector(2), Matrix::identity(2), 10.0), (Vector{10.0, 0.0}));
  EXPECT_EQ(cbf_update_rate(st, theta, 10.0), Vector(2));
}

TEST(UpdateLaws, ErrorDynamicsMatchMatrixExponential) {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> d;
  const Vector theta{1.0, 0.6};
  HistoryStack st(6, 2);
  for (int k = 0; k < 6; ++k) {
    Matrix y(2, 2);
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 2; ++j) y(i, j) = 0.5 * d(rng);
    st.offer(synthetic_entry(y, y * theta), 0.0);
  }
  const double gamma = 2.0, horizon = 1.5, dt = 1e-3;
  Vector th{0.0, 0.0};
  for (int k = 0; k < static_cast<int>(horizon / dt); ++k)
    th = rk4_step([&](double, const Vector& s) { return cbf_update_rate(st, s, gamma); }, th, k * dt, dt);
  const Vector expected = theta - expm_neg_sym2(st.information_matrix(), gamma * horizon) * theta;
  EXPECT_LT((th - expected).norm() / (theta - expected).norm(), 1e-4);
}

TEST(NuBound, Examples) {
  HistoryStack st(20, 2);
  EXPECT_DOUBLE_EQ(nu_bound(st, 3.0 * std::sqrt(2.0), 10.0, 5.0), 3.0 * std::sqrt(2.0));
  st.offer(synthetic_entry(Matrix::identity(2), Vector(2)), 0.0);  // λ = 1
  EXPECT_NEAR(nu_bound(st, 3.0 * std::sqrt(2.0), 10.0, 0.1), 3.0 * std::sqrt(2.0) * std::exp(-1.0), 1e-12);
  EXPECT_NEAR(nu_bound(st, 3.0 * std::sqrt(2.0), 10.0, 0.1), 1.560780, 1e-6);
  EXPECT_DOUBLE_EQ(nu_bound(st, 4.0, 0.0, 100.0), 4.0);
}

TEST(WindowBuffer, ClosedFormTrajectoryResidual) {
  // Damped double integrator, m = 1, θ = (1, 1), u = (0.3, −0.2):
  // v(t) = u/θ + (v₀ − u/θ)e^{−t}, q(t) = q₀ + (u/θ)t + (v₀ − u/θ)(1 − e^{−t})
  const Plant di = make_double_integrator(1.0);
  const Vector u{0.3, -0.2}, v0{1.0, -0.5}, q0{0.2, 0.4};
  auto state = [&](double t) {
    Vector x(4);
    for (int i = 0; i < 2; ++i) {
      const double c = v0[i] - u[i];
      x[i] = q0[i] + u[i] * t + c * (1.0 - std::exp(-t));
      x[2 + i] = u[i] + c * std::exp(-t);
    }
    return x;
  };
  const double dt = 1e-3;
  WindowBuffer buf(di.model, 0.5);
  HistoryStack st(20, 2);
  buf.push(0.0, state(0.0), u);
  for (int k = 1; k <= 1500; ++k) {
    buf.push(k * dt, state(k * dt), u);
    if (buf.full() && k % 10 == 0) record_candidate(st, buf, k * dt);
  }
  EXPECT_TRUE(buf.full());
  EXPECT_NEAR(buf.span(), 0.5, 1e-9);
  ASSERT_GT(st.size(), 0u);
  for (const auto& e : st.entries()) EXPECT_LT(e.residual(di.theta_true).norm(), 10 * dt * dt);
  const WindowIntegrals a = buf.integrals(), b = buf.recompute();
  EXPECT_LT((a.f - b.f).max_abs(), 1e-12);
  EXPECT_LT((a.y - b.y).max_abs(), 1e-12);
  EXPECT_LT((a.g - b.g).max_abs(), 1e-12);
}

TEST(WindowBuffer, RejectsNonIncreasingTimeAndEarlyRecording) {
  const Plant di = make_double_integrator(1.0);
  WindowBuffer buf(di.model, 0.5);
  HistoryStack st(20, 2);
  buf.push(0.0, Vector(4), Vector(2));
  EXPECT_THROW(buf.push(0.0, Vector(4), Vector(2)), ValidationError);
  buf.push(0.1, Vector(4), Vector(2));
  EXPECT_THROW(record_candidate(st, buf, 0.1), PreconditionError);
}
