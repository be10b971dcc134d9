#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "racbf/certificates.hpp"

using namespace racbf;

namespace {

constexpr double kPi = std::numbers::pi;

// Hand-derived disk chain on the double integrator (mass 1):
// ψ₀ = ‖q − c‖² − R², ψ₁ = 2(q − c)·v + k₁ψ₀.
double disk_psi1(const Vector& x, const Vector& c, double r, double k1) {
  const double dx = x[0] - c[0], dy = x[1] - c[1];
  return 2.0 * (dx * x[2] + dy * x[3]) + k1 * (dx * dx + dy * dy - r * r);
}

std::vector<Vector> random_states(std::mt19937_64& rng, std::size_t n, int count, double scale) {
  std::uniform_real_distribution<double> d(-scale, scale);
  std::vector<Vector> out;
  for (int k = 0; k < count; ++k) {
    Vector x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = d(rng);
    out.push_back(x);
  }
  return out;
}

}  // namespace

TEST(PsiValues, DiskObstacleAtStart) {
  const Plant di = make_double_integrator(1.0);
  const BarrierChain b = make_disk_barrier("obs1", di.model, Vector{-1.75, 2.0}, 0.5, 1.0, 1.0);
  const Vector psi = psi_values(b, di.model, Vector{-2.5, 2.5, 0.0, 0.0}, Vector{1.0, 1.0});
  EXPECT_NEAR(psi[0], 0.5625, 1e-14);
  EXPECT_NEAR(psi[1], 0.5625, 1e-14);
}

TEST(PsiValues, PendulumLowerBound) {
  const Plant pend = make_pendulum(0.7, 0.7);
  const BarrierChain b = make_halfspace_barrier("lower", pend.model, Vector{1.0}, kPi / 4, 5.0, 5.0);
  const Vector psi = psi_values(b, pend.model, Vector{0.0, 0.0}, Vector{10.0, 1.5});
  EXPECT_NEAR(psi[0], kPi / 4, 1e-15);
  EXPECT_NEAR(psi[1], 5 * kPi / 4, 1e-14);
  EXPECT_NEAR(psi[1], 3.92699, 1e-5);
}

TEST(PsiValues, OnBoundaryFirstLevelIsTimeDerivative) {
  const Plant di = make_double_integrator(1.0);
  const BarrierChain b = make_disk_barrier("o", di.model, Vector{0.0, 0.0}, 1.0, 3.0, 2.0);
  const Vector x{1.0, 0.0, 0.4, -0.7};  // on the circle
  const Vector psi = psi_values(b, di.model, x, Vector{1.0, 1.0});
  EXPECT_NEAR(psi[0], 0.0, 1e-15);
  EXPECT_NEAR(psi[1], 2.0 * 1.0 * 0.4, 1e-15);
}

TEST(PsiValues, MatchesHandDerivedChainEverywhere) {
  const Plant di = make_double_integrator(1.0);
  const Vector c{-1.0, 0.5};
  const BarrierChain b = make_disk_barrier("obs2", di.model, c, 0.5, 1.0, 1.0);
  std::mt19937_64 rng(5);
  for (const Vector& x : random_states(rng, 4, 200, 3.0))
    EXPECT_NEAR(psi_values(b, di.model, x, Vector{0.3, 2.0})[1], disk_psi1(x, c, 0.5, 1.0), 1e-12);
}

TEST(LieTerms, PendulumAtOrigin) {
  const Plant pend = make_pendulum(0.7, 0.7);
  const BarrierChain b = make_halfspace_barrier("lower", pend.model, Vector{1.0}, kPi / 4, 5.0, 5.0);
  const LieTerms lt = lie_terms(b, pend.model, Vector{0.0, 0.0});
  EXPECT_EQ(lt.lf, 0.0);
  EXPECT_EQ(lt.ly, (Vector{0.0, 0.0}));
  EXPECT_NEAR(lt.lg[0], 1.0 / (0.7 * 0.7 * 0.7), 1e-12);
  EXPECT_NEAR(lt.lg[0], 2.91545, 1e-5);
}

TEST(LieTerms, DiskAtStart) {
  const Plant di = make_double_integrator(1.0);
  const BarrierChain b = make_disk_barrier("obs1", di.model, Vector{-1.75, 2.0}, 0.5, 1.0, 1.0);
  const LieTerms lt = lie_terms(b, di.model, Vector{-2.5, 2.5, 0.0, 0.0});
  EXPECT_EQ(lt.lf, 0.0);
  EXPECT_EQ(lt.ly, (Vector{0.0, 0.0}));
  EXPECT_NEAR(lt.lg[0], -1.5, 1e-14);
  EXPECT_NEAR(lt.lg[1], 1.0, 1e-14);
}

TEST(LieTerms, ZeroVelocityKillsRegressorTerm) {
  const Plant di = make_double_integrator(2.0);
  const BarrierChain b = make_disk_barrier("o", di.model, Vector{0.3, -0.2}, 0.4, 2.0, 1.5);
  std::mt19937_64 rng(9);
  for (Vector x : random_states(rng, 4, 50, 3.0)) {
    x[2] = x[3] = 0.0;
    EXPECT_EQ(lie_terms(b, di.model, x).ly.max_abs(), 0.0);
  }
}

TEST(LieTerms, AgreeWithCentralDifferencesOfHandChain) {
  // d/dε ψ₁(x + ε w) for w ∈ {f, Y columns, g columns}, ψ₁ from the hand formula.
  const Plant di = make_double_integrator(1.0);
  const Vector c{-1.75, 2.0};
  const BarrierChain b = make_disk_barrier("obs1", di.model, c, 0.5, 1.0, 1.0);
  std::mt19937_64 rng(13);
  const double eps = 1e-5;
  for (const Vector& x : random_states(rng, 4, 500, 3.0)) {
    const LieTerms lt = lie_terms(b, di.model, x);
    auto dd = [&](const Vector& w) {
      return (disk_psi1(x + eps * w, c, 0.5, 1.0) - disk_psi1(x - eps * w, c, 0.5, 1.0)) / (2 * eps);
    };
    auto rel = [](double a, double e) { return std::abs(a - e) / std::max(1.0, std::abs(e)); };
    EXPECT_LT(rel(lt.lf, dd(di.model.drift(x))), 1e-4);
    for (std::size_t j = 0; j < 2; ++j) {
      EXPECT_LT(rel(lt.ly[j], dd(di.model.regressor(x).col(j))), 1e-4);
      EXPECT_LT(rel(lt.lg[j], dd(di.model.input_matrix(x).col(j))), 1e-4);
    }
  }
}

TEST(RelativeDegree, CaseStudyChainsSatisfyAssumption) {
  std::mt19937_64 rng(17);
  const Plant di = make_double_integrator(1.0);
  const Plant pend = make_pendulum(0.7, 0.7);
  const auto di_states = random_states(rng, 4, 500, 3.0);
  const auto pend_states = random_states(rng, 2, 500, 2.0);
  EXPECT_TRUE(check_relative_degree(make_disk_barrier("a", di.model, Vector{-1.75, 2.0}, 0.5, 1, 1), di.model,
                                    di_states, Vector{0.0, 0.0}, Vector{3.0, 3.0})
                  .holds());
  EXPECT_TRUE(check_relative_degree(make_halfspace_barrier("b", pend.model, Vector{-1.0}, kPi / 4, 5, 5), pend.model,
                                    pend_states, Vector{7.0, 0.0}, Vector{13.0, 3.0})
                  .holds());
  // ψ does not depend on θ.
  const BarrierChain b = make_halfspace_barrier("b", pend.model, Vector{1.0}, kPi / 4, 5, 5);
  for (const Vector& x : pend_states)
    EXPECT_EQ(psi_values(b, pend.model, x, Vector{7.0, 0.0}), psi_values(b, pend.model, x, Vector{13.0, 3.0}));
}

TEST(FdCheck, CorrectChainPassesScaledChainFails) {
  const Plant di = make_double_integrator(1.0);
  const BarrierChain b = make_disk_barrier("obs1", di.model, Vector{-1.75, 2.0}, 0.5, 1.0, 1.0);
  std::mt19937_64 rng(19);
  const auto states = random_states(rng, 4, 100, 3.0);
  const auto good = fd_check(b, di.model, states);
  EXPECT_TRUE(good.passed);
  EXPECT_LT(good.max_relative_error, 1e-5);
  EXPECT_FALSE(fd_check(b.with_scaled_last_gradient(1.01), di.model, states).passed);
}

TEST(Lyapunov, PendulumSpecValues) {
  const LyapunovSpec lyap(Matrix{{1.0, 0.5}, {0.5, 0.5}}, 1.0);
  EXPECT_DOUBLE_EQ(lyap.value(Vector{1.0, 0.0}), 1.0);
  EXPECT_EQ(lyap.gradient(Vector{1.0, 0.0}), (Vector{2.0, 1.0}));
  // eigenvalues of [[1, .5], [.5, .5]]: (3 ∓ √5)/4
  EXPECT_NEAR(lyap.c1(), (3.0 - std::sqrt(5.0)) / 4.0, 1e-14);
  EXPECT_NEAR(lyap.c2(), (3.0 + std::sqrt(5.0)) / 4.0, 1e-14);
  EXPECT_NEAR(lyap.c1(), 0.19098, 1e-5);
  EXPECT_NEAR(lyap.c2(), 1.30902, 1e-5);
}

TEST(Lyapunov, DecayRateFromQFormula) {
  // 2.5 · λmin([[2,1],[1,1]]) / λmax(P) = 2.5 · (3 − √5)/2 / ((3 + √5)/4)
  const double expected = 2.5 * ((3.0 - std::sqrt(5.0)) / 2.0) / ((3.0 + std::sqrt(5.0)) / 4.0);
  const double c3 = decay_rate_from_q(2.5, Matrix{{2.0, 1.0}, {1.0, 1.0}}, Matrix{{1.0, 0.5}, {0.5, 0.5}});
  EXPECT_NEAR(c3, expected, 1e-14);
  EXPECT_NEAR(c3, 0.729490, 1e-6);
}

TEST(Lyapunov, TermsVanishAtOrigin) {
  const Plant di = make_double_integrator(1.0);
  const LyapunovSpec lyap(Matrix{{2, 0, 1, 0}, {0, 2, 0, 1}, {1, 0, 1, 0}, {0, 1, 0, 1}}, 1.0);
  const LyapunovTerms t = lyapunov_terms(lyap, di.model, Vector(4));
  EXPECT_EQ(t.v, 0.0);
  EXPECT_EQ(t.lfv, 0.0);
  EXPECT_EQ(t.lyv.max_abs(), 0.0);
  EXPECT_EQ(t.lgv.max_abs(), 0.0);
}

TEST(Lyapunov, SandwichBoundsAndExactGradient) {
  const LyapunovSpec lyap(Matrix{{1.0, 0.5}, {0.5, 0.5}}, 1.0);
  std::mt19937_64 rng(23);
  const auto states = random_states(rng, 2, 1000, 5.0);
  for (const Vector& x : states) {
    const double v = lyap.value(x), r2 = x.squared_norm();
    EXPECT_LE(lyap.c1() * r2, v * (1 + 1e-12) + 1e-15);
    EXPECT_LE(v, lyap.c2() * r2 * (1 + 1e-12) + 1e-15);
  }
  const auto rep = fd_check(lyap, states);
  EXPECT_LT(rep.max_relative_error, 1e-9);
}

TEST(Lyapunov, RejectsIndefinite) {
  EXPECT_THROW(LyapunovSpec(Matrix{{1.0, 2.0}, {2.0, 1.0}}, 1.0), ValidationError);
  EXPECT_THROW(LyapunovSpec(Matrix::identity(2), 0.0), ValidationError);
}
