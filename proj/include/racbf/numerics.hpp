#pragma once

// Small dense linear algebra, a fixed-step RK4 integrator and an exact
// projection QP for the handful of dimensions used by the controllers
// (n <= 4, m <= 2, p <= 4).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "racbf/errors.hpp"

namespace racbf {

class Vector {
 public:
  Vector() = default;
  explicit Vector(std::size_t n, double value = 0.0) : data_(n, value) {}
  Vector(std::initializer_list<double> values) : data_(values) {}
  explicit Vector(std::vector<double> values) : data_(std::move(values)) {}

  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }
  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }
  std::span<const double> view() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  Vector& operator+=(const Vector& rhs) {
    require_same_size(rhs, "+=");
    for (std::size_t i = 0; i < size(); ++i) data_[i] += rhs.data_[i];
    return *this;
  }
  Vector& operator-=(const Vector& rhs) {
    require_same_size(rhs, "-=");
    for (std::size_t i = 0; i < size(); ++i) data_[i] -= rhs.data_[i];
    return *this;
  }
  Vector& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }

  double dot(const Vector& rhs) const {
    require_same_size(rhs, "dot");
    double acc = 0.0;
    for (std::size_t i = 0; i < size(); ++i) acc += data_[i] * rhs.data_[i];
    return acc;
  }
  double squared_norm() const { return dot(*this); }
  double norm() const { return std::sqrt(squared_norm()); }
  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }
  bool is_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  Vector segment(std::size_t start, std::size_t length) const {
    if (start + length > size()) throw DimensionError("Vector::segment out of range");
    return Vector(std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(start),
                                      data_.begin() + static_cast<std::ptrdiff_t>(start + length)));
  }
  void set_segment(std::size_t start, const Vector& v) {
    if (start + v.size() > size()) throw DimensionError("Vector::set_segment out of range");
    std::copy(v.begin(), v.end(), data_.begin() + static_cast<std::ptrdiff_t>(start));
  }

  friend bool operator==(const Vector&, const Vector&) = default;

 private:
  void require_same_size(const Vector& rhs, const char* op) const {
    if (rhs.size() != size()) {
      std::ostringstream os;
      os << "Vector " << op << ": size " << size() << " vs " << rhs.size();
      throw DimensionError(os.str());
    }
  }

  std::vector<double> data_;
};

inline Vector operator+(Vector a, const Vector& b) { return a += b; }
inline Vector operator-(Vector a, const Vector& b) { return a -= b; }
inline Vector operator*(Vector a, double s) { return a *= s; }
inline Vector operator*(double s, Vector a) { return a *= s; }
inline Vector operator-(Vector a) { return a *= -1.0; }

inline Vector concat(std::initializer_list<const Vector*> parts) {
  std::vector<double> out;
  for (const Vector* p : parts) out.insert(out.end(), p->begin(), p->end());
  return Vector(std::move(out));
}

/// Row-major dense matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double value = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, value) {}
  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw DimensionError("Matrix: ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
  static Matrix diagonal(const Vector& d) {
    Matrix m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool is_square() const noexcept { return rows_ == cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  Vector row(std::size_t i) const {
    return Vector(std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(i * cols_),
                                      data_.begin() + static_cast<std::ptrdiff_t>((i + 1) * cols_)));
  }
  Vector col(std::size_t j) const {
    Vector c(rows_);
    for (std::size_t i = 0; i < rows_; ++i) c[i] = (*this)(i, j);
    return c;
  }

  Matrix transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  Matrix& operator+=(const Matrix& rhs) {
    require_same_shape(rhs, "+=");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += rhs.data_[k];
    return *this;
  }
  Matrix& operator-=(const Matrix& rhs) {
    require_same_shape(rhs, "-=");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= rhs.data_[k];
    return *this;
  }
  Matrix& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }

  double frobenius_norm() const {
    double acc = 0.0;
    for (double v : data_) acc += v * v;
    return std::sqrt(acc);
  }
  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }
  bool is_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }
  bool is_symmetric(double tol = 1e-10) const {
    if (!is_square()) return false;
    const double scale = std::max(1.0, max_abs());
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = i + 1; j < cols_; ++j)
        if (std::abs((*this)(i, j) - (*this)(j, i)) > tol * scale) return false;
    return true;
  }

  const std::vector<double>& values() const noexcept { return data_; }
  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  void require_same_shape(const Matrix& rhs, const char* op) const {
    if (rhs.rows_ != rows_ || rhs.cols_ != cols_) {
      std::ostringstream os;
      os << "Matrix " << op << ": " << rows_ << "x" << cols_ << " vs " << rhs.rows_ << "x" << rhs.cols_;
      throw DimensionError(os.str());
    }
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
inline Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
inline Matrix operator*(Matrix a, double s) { return a *= s; }
inline Matrix operator*(double s, Matrix a) { return a *= s; }

inline Matrix operator*(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw DimensionError("Matrix product: inner dimensions differ");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

inline Vector operator*(const Matrix& a, const Vector& v) {
  if (a.cols() != v.size()) throw DimensionError("Matrix-vector product: dimensions differ");
  Vector out(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) acc += a(i, j) * v[j];
    out[i] = acc;
  }
  return out;
}

/// aᵀ v without forming the transpose.
inline Vector transpose_times(const Matrix& a, const Vector& v) {
  if (a.rows() != v.size()) throw DimensionError("transpose_times: dimensions differ");
  Vector out(a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out[j] += a(i, j) * v[i];
  return out;
}

/// aᵀ a.
inline Matrix gram(const Matrix& a) {
  Matrix g(a.cols(), a.cols());
  for (std::size_t k = 0; k < a.rows(); ++k)
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a(k, i);
      if (aki == 0.0) continue;
      for (std::size_t j = 0; j < a.cols(); ++j) g(i, j) += aki * a(k, j);
    }
  return g;
}

/// Solves a x = b by Gaussian elimination with partial pivoting.
/// Returns nullopt when a is numerically singular.
inline std::optional<Vector> solve_linear(Matrix a, Vector b) {
  if (!a.is_square() || a.rows() != b.size()) throw DimensionError("solve_linear: shape mismatch");
  const std::size_t n = a.rows();
  const double scale = std::max(a.max_abs(), std::numeric_limits<double>::min());
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(a(i, k)) > std::abs(a(piv, k))) piv = i;
    if (std::abs(a(piv, k)) <= 1e-12 * scale) return std::nullopt;
    if (piv != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a(k, j), a(piv, j));
      std::swap(b[k], b[piv]);
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      const double factor = a(i, k) / a(k, k);
      if (factor == 0.0) continue;
      for (std::size_t j = k; j < n; ++j) a(i, j) -= factor * a(k, j);
      b[i] -= factor * b[k];
    }
  }
  Vector x(n);
  for (std::size_t ii = n; ii-- > 0;) {
    double acc = b[ii];
    for (std::size_t j = ii + 1; j < n; ++j) acc -= a(ii, j) * x[j];
    x[ii] = acc / a(ii, ii);
  }
  return x;
}

inline Matrix inverse(const Matrix& a) {
  if (!a.is_square()) throw DimensionError("inverse: matrix is not square");
  const std::size_t n = a.rows();
  Matrix inv(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    Vector e(n);
    e[j] = 1.0;
    auto col = solve_linear(a, e);
    if (!col) throw NumericalError("inverse: matrix is singular", 0.0);
    for (std::size_t i = 0; i < n; ++i) inv(i, j) = (*col)[i];
  }
  return inv;
}

namespace detail {

inline void require_symmetric(const Matrix& m, const char* who) {
  if (!m.is_square()) throw DimensionError(std::string(who) + ": matrix is not square");
  if (!m.is_symmetric(1e-10)) throw DimensionError(std::string(who) + ": matrix is not symmetric");
}

}  // namespace detail

/// All eigenvalues of a symmetric matrix in ascending order, by cyclic Jacobi
/// rotations (at most 50 sweeps, or until the off-diagonal norm drops below 1e-14).
inline Vector symmetric_eigenvalues(const Matrix& m) {
  detail::require_symmetric(m, "symmetric_eigenvalues");
  const std::size_t n = m.rows();
  Matrix a = m;
  // Symmetrize exactly so rotations act on a truly symmetric array.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) a(i, j) = a(j, i) = 0.5 * (a(i, j) + a(j, i));

  const double threshold = 1e-14 * std::max(1.0, a.frobenius_norm());
  auto off_norm = [&] {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) acc += a(i, j) * a(i, j);
    return std::sqrt(acc);
  };

  for (int sweep = 0; sweep < 50 && off_norm() >= threshold; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = a(q, p) = 0.0;
      }
    }
  }

  Vector eig(n);
  for (std::size_t i = 0; i < n; ++i) eig[i] = a(i, i);
  std::sort(eig.begin(), eig.end());
  return eig;
}

inline double min_eigenvalue(const Matrix& m) {
  if (m.rows() == 0) throw DimensionError("min_eigenvalue: empty matrix");
  return symmetric_eigenvalues(m)[0];
}

inline double max_eigenvalue(const Matrix& m) {
  if (m.rows() == 0) throw DimensionError("max_eigenvalue: empty matrix");
  const Vector e = symmetric_eigenvalues(m);
  return e[e.size() - 1];
}

/// One classical fourth-order Runge–Kutta step of ds/dt = deriv(t, s).
template <typename Deriv>
Vector rk4_step(Deriv&& deriv, const Vector& state, double t, double dt) {
  if (!(dt > 0.0)) throw ValidationError("rk4_step: dt must be positive");
  auto stage = [&](double ts, const Vector& s) {
    Vector k = deriv(ts, s);
    if (k.size() != state.size()) throw DimensionError("rk4_step: derivative has wrong dimension");
    if (!k.is_finite()) {
      std::ostringstream os;
      os << "rk4_step: non-finite derivative at t = " << ts;
      throw NumericalError(os.str(), ts);
    }
    return k;
  };
  const Vector k1 = stage(t, state);
  const Vector k2 = stage(t + 0.5 * dt, state + (0.5 * dt) * k1);
  const Vector k3 = stage(t + 0.5 * dt, state + (0.5 * dt) * k2);
  const Vector k4 = stage(t + dt, state + dt * k3);
  Vector next = state;
  for (std::size_t i = 0; i < next.size(); ++i)
    next[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  return next;
}

inline Vector trapezoid_update(const Vector& acc, const Vector& sample_prev, const Vector& sample_new, double dt) {
  if (!(dt > 0.0)) throw ValidationError("trapezoid_update: dt must be positive");
  if (acc.size() != sample_prev.size() || acc.size() != sample_new.size())
    throw DimensionError("trapezoid_update: dimension mismatch");
  Vector out = acc;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += 0.5 * dt * (sample_prev[i] + sample_new[i]);
  return out;
}

inline Matrix trapezoid_update(const Matrix& acc, const Matrix& sample_prev, const Matrix& sample_new, double dt) {
  if (!(dt > 0.0)) throw ValidationError("trapezoid_update: dt must be positive");
  if (acc.rows() != sample_prev.rows() || acc.cols() != sample_prev.cols() ||
      acc.rows() != sample_new.rows() || acc.cols() != sample_new.cols())
    throw DimensionError("trapezoid_update: dimension mismatch");
  return acc + (0.5 * dt) * (sample_prev + sample_new);
}

/// row · u >= rhs
struct LinearConstraint {
  Vector row;
  double rhs = 0.0;
};

/// minimize ½‖u − target‖² subject to every constraint.
struct QpProblem {
  Vector target;
  std::vector<LinearConstraint> constraints;
};

namespace detail {

inline double feasibility_tolerance(const LinearConstraint& c, const Vector& u) {
  return 1e-10 * (1.0 + std::abs(c.rhs) + c.row.norm() * u.norm());
}

// Projection of `target` onto {u : row_i · u = rhs_i, i in subset}.
inline std::optional<Vector> project_onto_equalities(const Vector& target,
                                                     const std::vector<const LinearConstraint*>& subset) {
  const std::size_t s = subset.size();
  if (s == 0) return target;
  Matrix g(s, s);
  Vector r(s);
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t j = 0; j < s; ++j) g(i, j) = subset[i]->row.dot(subset[j]->row);
    r[i] = subset[i]->rhs - subset[i]->row.dot(target);
  }
  auto mu = solve_linear(g, r);
  if (!mu) return std::nullopt;
  Vector u = target;
  for (std::size_t i = 0; i < s; ++i) u += (*mu)[i] * subset[i]->row;
  return u;
}

}  // namespace detail

/// Exact minimizer of ½‖u − target‖² over a small polyhedron.
///
/// Enumerates every active set of size ≤ dim(u) in lexicographic order, projects
/// the target onto the corresponding affine subspace, and keeps the feasible
/// candidate with the smallest objective (the first one on ties). The true
/// minimizer is the projection onto the affine hull of its own active set, so
/// it is always among the candidates.
inline Vector solve_projection_qp(const QpProblem& problem) {
  const std::size_t m = problem.target.size();
  if (!problem.target.is_finite()) throw NumericalError("solve_projection_qp: non-finite target", 0.0);

  std::vector<const LinearConstraint*> live;
  for (const auto& c : problem.constraints) {
    if (c.row.size() != m) throw DimensionError("solve_projection_qp: constraint row has wrong dimension");
    if (!c.row.is_finite() || !std::isfinite(c.rhs))
      throw NumericalError("solve_projection_qp: non-finite constraint", 0.0);
    if (c.row.max_abs() <= 1e-14) {
      if (c.rhs > 0.0) throw InfeasibleError("solve_projection_qp: zero constraint row with positive rhs");
      continue;
    }
    live.push_back(&c);
  }

  auto feasible = [&](const Vector& u) {
    return std::all_of(live.begin(), live.end(), [&](const LinearConstraint* c) {
      return c->row.dot(u) >= c->rhs - detail::feasibility_tolerance(*c, u);
    });
  };

  std::optional<Vector> best;
  double best_obj = std::numeric_limits<double>::infinity();
  std::vector<const LinearConstraint*> subset;
  const std::size_t k = live.size();
  const std::size_t max_size = std::min(m, k);

  // Lexicographic enumeration of index subsets; smaller subsets first.
  for (std::size_t size = 0; size <= max_size; ++size) {
    std::vector<std::size_t> idx(size);
    for (std::size_t i = 0; i < size; ++i) idx[i] = i;
    while (true) {
      subset.clear();
      for (std::size_t i : idx) subset.push_back(live[i]);
      if (auto u = detail::project_onto_equalities(problem.target, subset); u && feasible(*u)) {
        const double obj = 0.5 * (*u - problem.target).squared_norm();
        if (!best || obj < best_obj - 1e-14 * (1.0 + best_obj)) {
          best_obj = obj;
          best = std::move(*u);
        }
      }
      if (size == 0) break;
      std::size_t pos = size;
      while (pos > 0 && idx[pos - 1] == k - size + pos - 1) --pos;
      if (pos == 0) break;
      ++idx[pos - 1];
      for (std::size_t j = pos; j < size; ++j) idx[j] = idx[j - 1] + 1;
    }
  }

  if (!best) {
    std::ostringstream os;
    os << "solve_projection_qp: constraint system is infeasible:";
    for (const auto* c : live) {
      os << " [";
      for (std::size_t i = 0; i < c->row.size(); ++i) os << (i ? ", " : "") << c->row[i];
      os << "]·u >= " << c->rhs << ";";
    }
    throw InfeasibleError(os.str());
  }
  return *best;
}

}  // namespace racbf
