#pragma once

// Independent reference computations used to cross-check the fast paths:
// brute-force grid QP, closed-form eigenvalues of small symmetric matrices,
// finite-difference Lie derivatives of a barrier chain rebuilt from h alone,
// and a Taylor scaling-and-squaring matrix exponential.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>

#include "racbf/certificates.hpp"
#include "racbf/errors.hpp"
#include "racbf/numerics.hpp"
#include "racbf/plant.hpp"

namespace racbf::oracle {

struct GridQpResult {
  Vector u;
  double objective = std::numeric_limits<double>::infinity();
};

inline bool grid_feasible(const QpProblem& qp, const Vector& u) {
  for (const auto& c : qp.constraints)
    if (c.row.dot(u) < c.rhs) return false;
  return true;
}

inline double qp_objective(const QpProblem& qp, const Vector& u) { return 0.5 * (u - qp.target).squared_norm(); }

/// Exhaustive search of the box center ± half_width at `step` spacing in every
/// coordinate (dimension 1 to 3). Only strictly feasible grid points count.
inline GridQpResult grid_qp(const QpProblem& qp, const Vector& center, double half_width, double step) {
  const std::size_t d = qp.target.size();
  if (d < 1 || d > 3 || center.size() != d) throw DimensionError("grid_qp: dimension must be 1, 2 or 3");
  const auto count = static_cast<long>(std::floor(2.0 * half_width / step + 1e-9)) + 1;
  GridQpResult best;
  Vector u(d);
  std::array<long, 3> idx{0, 0, 0};
  const long n1 = d > 1 ? count : 1, n2 = d > 2 ? count : 1;
  for (idx[0] = 0; idx[0] < count; ++idx[0])
    for (idx[1] = 0; idx[1] < n1; ++idx[1])
      for (idx[2] = 0; idx[2] < n2; ++idx[2]) {
        for (std::size_t k = 0; k < d; ++k) u[k] = center[k] - half_width + step * static_cast<double>(idx[k]);
        if (!grid_feasible(qp, u)) continue;
        const double obj = qp_objective(qp, u);
        if (obj < best.objective) best = {u, obj};
      }
  return best;
}

/// Coarse grid followed by repeated local refinement down to `fine_step`.
inline GridQpResult grid_qp_refined(const QpProblem& qp, const Vector& center, double half_width,
                                    std::size_t coarse_points = 201, double fine_step = 1e-7) {
  double step = 2.0 * half_width / static_cast<double>(coarse_points - 1);
  GridQpResult best = grid_qp(qp, center, half_width, step);
  while (best.u.size() && step > fine_step) {
    const double width = 4.0 * step;
    step /= 20.0;
    GridQpResult local = grid_qp(qp, best.u, width, step);
    if (local.objective < best.objective) best = local;
  }
  return best;
}

/// Eigenvalues of a symmetric 2×2 matrix from its characteristic polynomial, ascending.
inline std::array<double, 2> eigenvalues_2x2(const Matrix& a) {
  const double tr = a(0, 0) + a(1, 1);
  const double diff = a(0, 0) - a(1, 1);
  const double disc = std::sqrt(diff * diff + 4.0 * a(0, 1) * a(0, 1));
  return {0.5 * (tr - disc), 0.5 * (tr + disc)};
}

/// Eigenvalues of a symmetric 3×3 matrix by the trigonometric solution of the cubic, ascending.
inline std::array<double, 3> eigenvalues_3x3(const Matrix& a) {
  const double p1 = a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) + a(1, 2) * a(1, 2);
  const double q = (a(0, 0) + a(1, 1) + a(2, 2)) / 3.0;
  if (p1 == 0.0) {
    std::array<double, 3> e{a(0, 0), a(1, 1), a(2, 2)};
    std::sort(e.begin(), e.end());
    return e;
  }
  const double p2 = (a(0, 0) - q) * (a(0, 0) - q) + (a(1, 1) - q) * (a(1, 1) - q) + (a(2, 2) - q) * (a(2, 2) - q) +
                    2.0 * p1;
  const double p = std::sqrt(p2 / 6.0);
  Matrix b = a;
  for (std::size_t i = 0; i < 3; ++i) b(i, i) -= q;
  b = (1.0 / p) * b;
  const double det = b(0, 0) * (b(1, 1) * b(2, 2) - b(1, 2) * b(2, 1)) -
                     b(0, 1) * (b(1, 0) * b(2, 2) - b(1, 2) * b(2, 0)) +
                     b(0, 2) * (b(1, 0) * b(2, 1) - b(1, 1) * b(2, 0));
  const double r = std::clamp(det / 2.0, -1.0, 1.0);
  const double phi = std::acos(r) / 3.0;
  const double e1 = q + 2.0 * p * std::cos(phi);
  const double e3 = q + 2.0 * p * std::cos(phi + 2.0 * std::numbers::pi / 3.0);
  const double e2 = 3.0 * q - e1 - e3;
  std::array<double, 3> e{e1, e2, e3};
  std::sort(e.begin(), e.end());
  return e;
}

/// Central difference of a scalar function along direction d.
inline double directional_fd(const std::function<double(const Vector&)>& fn, const Vector& x, const Vector& d,
                             double eps) {
  return (fn(x + eps * d) - fn(x - eps * d)) / (2.0 * eps);
}

/// ψ_level rebuilt from h alone: each level differentiates the previous one
/// numerically along f + Yθ and adds its linear class-K term.
inline double psi_fd(const BarrierChain& b, const UncertainAffineSystem& sys, const Vector& x, const Vector& theta,
                     std::size_t level) {
  if (level == 0) return b.h(x);
  const double eps = 1e-5 * std::pow(10.0, static_cast<double>(level - 1));
  auto prev = [&](const Vector& z) { return psi_fd(b, sys, z, theta, level - 1); };
  const Vector v = sys.drift(x) + sys.regressor(x) * theta;
  return directional_fd(prev, x, v, eps) + b.alpha(level - 1, prev(x));
}

/// Lie derivatives of ψ_{r−1} along f, the columns of Y and the columns of g, all by finite differences.
inline LieTerms lie_terms_fd(const BarrierChain& b, const UncertainAffineSystem& sys, const Vector& x,
                             const Vector& theta) {
  const std::size_t top = b.order() - 1;
  const double eps = 1e-5 * std::pow(10.0, static_cast<double>(top));
  auto psi = [&](const Vector& z) { return psi_fd(b, sys, z, theta, top); };
  LieTerms out{directional_fd(psi, x, sys.drift(x), eps), Vector(sys.p()), Vector(sys.m())};
  const Matrix y = sys.regressor(x);
  const Matrix g = sys.input_matrix(x);
  for (std::size_t j = 0; j < sys.p(); ++j) out.ly[j] = directional_fd(psi, x, y.col(j), eps);
  for (std::size_t j = 0; j < sys.m(); ++j) out.lg[j] = directional_fd(psi, x, g.col(j), eps);
  return out;
}

/// e^A by scaling and squaring with a truncated Taylor series.
inline Matrix matrix_exponential(const Matrix& a) {
  if (a.rows() != a.cols()) throw DimensionError("matrix_exponential: matrix must be square");
  const double norm = a.frobenius_norm();
  int squarings = 0;
  if (norm > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
  const Matrix scaled = std::ldexp(1.0, -squarings) * a;
  Matrix result = Matrix::identity(a.rows());
  Matrix term = Matrix::identity(a.rows());
  for (int k = 1; k <= 24; ++k) {
    term = (1.0 / k) * (term * scaled);
    result = result + term;
  }
  for (int i = 0; i < squarings; ++i) result = result * result;
  return result;
}

}  // namespace racbf::oracle
