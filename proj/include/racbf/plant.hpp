#pragma once

// Uncertain control-affine plants  ẋ = f(x) + Y(x)θ + g(x)u.

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "racbf/errors.hpp"
#include "racbf/numerics.hpp"

namespace racbf {

/// Which state coordinates are configuration variables and which are their
/// time derivatives (q̇ = v). Used by the mechanical barrier factories.
struct ConfigurationLayout {
  std::vector<std::size_t> position;
  std::vector<std::size_t> velocity;
};

/// The model a controller is allowed to see: the known vector fields only.
class UncertainAffineSystem {
 public:
  using VectorField = std::function<Vector(const Vector&)>;
  using MatrixField = std::function<Matrix(const Vector&)>;

  UncertainAffineSystem(std::string name, std::size_t n, std::size_t m, std::size_t p, VectorField f,
                        MatrixField regressor, MatrixField input, ConfigurationLayout layout = {})
      : name_(std::move(name)),
        n_(n),
        m_(m),
        p_(p),
        f_(std::move(f)),
        regressor_(std::move(regressor)),
        input_(std::move(input)),
        layout_(std::move(layout)) {}

  const std::string& name() const noexcept { return name_; }
  std::size_t n() const noexcept { return n_; }
  std::size_t m() const noexcept { return m_; }
  std::size_t p() const noexcept { return p_; }
  const ConfigurationLayout& layout() const noexcept { return layout_; }

  Vector drift(const Vector& x) const {
    require_state(x);
    return f_(x);
  }
  Matrix regressor(const Vector& x) const {
    require_state(x);
    return regressor_(x);
  }
  Matrix input_matrix(const Vector& x) const {
    require_state(x);
    return input_(x);
  }

  void require_state(const Vector& x) const {
    if (x.size() != n_) throw DimensionError("state has dimension " + std::to_string(x.size()) +
                                             ", system '" + name_ + "' expects " + std::to_string(n_));
  }

 private:
  std::string name_;
  std::size_t n_, m_, p_;
  VectorField f_;
  MatrixField regressor_;
  MatrixField input_;
  ConfigurationLayout layout_;
};

/// The simulator's view: the model plus the parameters nature actually uses.
struct Plant {
  UncertainAffineSystem model;
  Vector theta_true;
};

/// Axis-aligned parameter box lower ≤ θ ≤ upper.
struct ParamBox {
  Vector lower;
  Vector upper;

  void validate() const {
    if (lower.size() != upper.size() || lower.empty()) throw ValidationError("ParamBox: lower/upper dimension mismatch");
    for (std::size_t i = 0; i < lower.size(); ++i)
      if (!(lower[i] <= upper[i])) throw ValidationError("ParamBox: lower exceeds upper in component " + std::to_string(i));
  }
  std::size_t dim() const noexcept { return lower.size(); }
  bool contains(const Vector& theta, double tol = 0.0) const {
    if (theta.size() != lower.size()) return false;
    for (std::size_t i = 0; i < theta.size(); ++i)
      if (theta[i] < lower[i] - tol || theta[i] > upper[i] + tol) return false;
    return true;
  }
  Vector center() const { return 0.5 * (lower + upper); }
};

inline Vector eval_dynamics(const UncertainAffineSystem& sys, const Vector& x, const Vector& theta, const Vector& u) {
  if (theta.size() != sys.p()) throw DimensionError("eval_dynamics: theta has wrong dimension");
  if (u.size() != sys.m()) throw DimensionError("eval_dynamics: u has wrong dimension");
  return sys.drift(x) + sys.regressor(x) * theta + sys.input_matrix(x) * u;
}

/// Largest possible |θ_i − θ̂_i| over θ, θ̂ ∈ box. For a box both extremal
/// linear programs are solved at opposite corners, giving the width.
inline Vector worst_case_error(const ParamBox& box) {
  box.validate();
  return box.upper - box.lower;
}

namespace detail {

inline void require_equilibrium_at_origin(const UncertainAffineSystem& sys) {
  const Vector origin(sys.n());
  if (sys.drift(origin).max_abs() != 0.0 || sys.regressor(origin).max_abs() != 0.0)
    throw ValidationError("system '" + sys.name() + "': f(0) and Y(0) must vanish");
}

}  // namespace detail

/// Planar double integrator with viscous friction, state (x₁, x₂, ẋ₁, ẋ₂),
/// uncertain θ = (μ₁, μ₂).
inline Plant make_double_integrator(double mass, Vector theta_true = {1.0, 1.0}) {
  if (!(mass > 0.0)) throw ValidationError("double integrator: mass must be positive");
  if (theta_true.size() != 2) throw DimensionError("double integrator: theta has 2 components");
  auto f = [](const Vector& x) { return Vector{x[2], x[3], 0.0, 0.0}; };
  auto regressor = [mass](const Vector& x) {
    Matrix y(4, 2);
    y(2, 0) = -x[2] / mass;
    y(3, 1) = -x[3] / mass;
    return y;
  };
  auto input = [mass](const Vector&) {
    Matrix g(4, 2);
    g(2, 0) = 1.0 / mass;
    g(3, 1) = 1.0 / mass;
    return g;
  };
  Plant plant{UncertainAffineSystem("double_integrator", 4, 2, 2, f, regressor, input, {{0, 1}, {2, 3}}),
              std::move(theta_true)};
  detail::require_equilibrium_at_origin(plant.model);
  return plant;
}

/// Inverted pendulum, state (angle, angular rate), uncertain θ = (gravity, damping).
inline Plant make_pendulum(double length, double mass, Vector theta_true = {9.8, 0.2}) {
  if (!(length > 0.0) || !(mass > 0.0)) throw ValidationError("pendulum: length and mass must be positive");
  if (theta_true.size() != 2) throw DimensionError("pendulum: theta has 2 components");
  auto f = [](const Vector& x) { return Vector{x[1], 0.0}; };
  auto regressor = [length, mass](const Vector& x) {
    Matrix y(2, 2);
    y(1, 0) = std::sin(x[0]) / length;
    y(1, 1) = -x[1] / mass;
    return y;
  };
  auto input = [length, mass](const Vector&) {
    Matrix g(2, 1);
    g(1, 0) = 1.0 / (mass * length * length);
    return g;
  };
  Plant plant{UncertainAffineSystem("pendulum", 2, 1, 2, f, regressor, input, {{0}, {1}}), std::move(theta_true)};
  detail::require_equilibrium_at_origin(plant.model);
  return plant;
}

}  // namespace racbf
