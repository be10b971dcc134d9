#pragma once

// Concurrent learning: trailing-window integrals of the dynamics, a history
// stack of recorded windows, the two parameter update laws and the certified
// estimation-error envelope ν(t).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "racbf/errors.hpp"
#include "racbf/numerics.hpp"
#include "racbf/plant.hpp"

namespace racbf {

/// Integrals of f(x), Y(x) and g(x)u over a time window, plus x(end) − x(start).
struct WindowIntegrals {
  Vector dx;
  Vector f;
  Matrix y;
  Vector g;
};

/// Integrals of f(x), Y(x) and g(x)u over one integration interval.
struct IntervalIntegrals {
  Vector f;
  Matrix y;
  Vector g;
};

/// Ring of (t, x) samples covering the trailing window with trapezoidal
/// running integrals. The input integral on each interval uses the control
/// applied at its left and right endpoints (equal under a zero-order hold).
class WindowBuffer {
 public:
  WindowBuffer(UncertainAffineSystem sys, double window) : sys_(std::move(sys)), window_(window) {
    if (!(window > 0.0)) throw ValidationError("WindowBuffer: window length must be positive");
    f_acc_ = Vector(sys_.n());
    y_acc_ = Matrix(sys_.n(), sys_.p());
    g_acc_ = Vector(sys_.n());
  }

  /// Appends x(t). `u_held` is the control applied on (t_prev, t]; ignored for the first sample.
  void push(double t, const Vector& x, const Vector& u_held) { push(t, x, u_held, u_held); }

  /// Appends x(t) when the control varies over the interval: `u_left` at t_prev, `u_right` at t.
  void push(double t, const Vector& x, const Vector& u_left, const Vector& u_right) {
    Sample s{t, x, sys_.drift(x), sys_.regressor(x), sys_.input_matrix(x)};
    if (!samples_.empty()) {
      const Sample& prev = samples_.back();
      const double dt = t - prev.t;
      if (!(dt > 0.0)) throw ValidationError("WindowBuffer: samples must be strictly increasing in time");
      if (u_left.size() != sys_.m() || u_right.size() != sys_.m())
        throw DimensionError("WindowBuffer: control has wrong dimension");
      const Vector zero_n(sys_.n());
      const Matrix zero_y(sys_.n(), sys_.p());
      IntervalIntegrals iv{trapezoid_update(zero_n, prev.f, s.f, dt), trapezoid_update(zero_y, prev.y, s.y, dt),
                           trapezoid_update(zero_n, prev.g * u_left, s.g * u_right, dt)};
      add_interval(std::move(iv));
    }
    samples_.push_back(std::move(s));
    trim();
  }

  /// Appends x(t) with the interval integrals supplied by the caller, e.g. from
  /// the integrator's own stage evaluations.
  void push_interval(double t, const Vector& x, IntervalIntegrals iv) {
    if (samples_.empty()) throw PreconditionError("WindowBuffer: push_interval needs a previous sample");
    if (!(t > samples_.back().t)) throw ValidationError("WindowBuffer: samples must be strictly increasing in time");
    if (iv.f.size() != sys_.n() || iv.g.size() != sys_.n() || iv.y.rows() != sys_.n() || iv.y.cols() != sys_.p())
      throw DimensionError("WindowBuffer: interval integrals have wrong dimension");
    add_interval(std::move(iv));
    samples_.push_back(Sample{t, x, sys_.drift(x), sys_.regressor(x), sys_.input_matrix(x)});
    trim();
  }

  bool full() const noexcept { return samples_.size() >= 2 && span() >= window_ - time_slack(); }
  double span() const noexcept { return samples_.empty() ? 0.0 : samples_.back().t - samples_.front().t; }
  double window() const noexcept { return window_; }
  std::size_t sample_count() const noexcept { return samples_.size(); }
  double newest_time() const {
    if (samples_.empty()) throw PreconditionError("WindowBuffer is empty");
    return samples_.back().t;
  }

  /// Incrementally maintained integrals.
  WindowIntegrals integrals() const {
    if (samples_.empty()) throw PreconditionError("WindowBuffer is empty");
    return {samples_.back().x - samples_.front().x, f_acc_, y_acc_, g_acc_};
  }

  /// Same integrals summed afresh from the stored intervals.
  WindowIntegrals recompute() const {
    if (samples_.empty()) throw PreconditionError("WindowBuffer is empty");
    WindowIntegrals w{samples_.back().x - samples_.front().x, Vector(sys_.n()), Matrix(sys_.n(), sys_.p()),
                      Vector(sys_.n())};
    for (const IntervalIntegrals& iv : intervals_) {
      w.f += iv.f;
      w.y += iv.y;
      w.g += iv.g;
    }
    return w;
  }

 private:
  struct Sample {
    double t;
    Vector x, f;
    Matrix y, g;
  };
  double time_slack() const noexcept { return 1e-9 * window_; }

  void add_interval(IntervalIntegrals iv) {
    f_acc_ += iv.f;
    y_acc_ += iv.y;
    g_acc_ += iv.g;
    intervals_.push_back(std::move(iv));
  }

  // Keep the shortest suffix that still spans the window.
  void trim() {
    while (samples_.size() >= 3 && samples_.back().t - samples_[1].t >= window_ - time_slack()) {
      const IntervalIntegrals& iv = intervals_.front();
      f_acc_ -= iv.f;
      y_acc_ -= iv.y;
      g_acc_ -= iv.g;
      intervals_.pop_front();
      samples_.pop_front();
    }
  }

  UncertainAffineSystem sys_;
  double window_;
  std::deque<Sample> samples_;
  std::deque<IntervalIntegrals> intervals_;
  Vector f_acc_;
  Matrix y_acc_;
  Vector g_acc_;
};

/// One recorded window: Δx_j = F_j + Y_jθ + G_j up to quadrature error.
struct HistoryEntry {
  double t = 0.0;
  Vector dx;
  Vector f;
  Matrix y;
  Vector g;

  Vector residual(const Vector& theta) const { return dx - f - y * theta - g; }
};

/// Fixed-capacity stack of recorded windows with information matrix
/// Λ = Σ Y_jᵀY_j and λ = λmin(Λ). Recording never lowers λ, and ∫₀ᵗλ is
/// accumulated exactly since λ is constant between changes.
class HistoryStack {
 public:
  HistoryStack(std::size_t capacity, std::size_t p) : capacity_(capacity), p_(p), lambda_mat_(p, p) {
    if (capacity == 0) throw ValidationError("HistoryStack: capacity must be positive");
  }

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool full() const noexcept { return entries_.size() == capacity_; }
  const std::vector<HistoryEntry>& entries() const noexcept { return entries_; }
  const Matrix& information_matrix() const noexcept { return lambda_mat_; }
  double lambda_min() const noexcept { return lambda_min_; }
  double lambda_integral() const noexcept { return lambda_integral_; }
  double last_change_time() const noexcept { return last_change_t_; }

  /// ∫₀ᵗ λ(τ)dτ including the pending piece since the last change.
  double lambda_integral_at(double t) const {
    return lambda_integral_ + lambda_min_ * std::max(0.0, t - last_change_t_);
  }

  /// Offers a candidate recorded at time t. Appends while filling; once full,
  /// swaps out the entry whose replacement maximizes λmin, provided that
  /// lifts λmin by more than 1e-9.
  bool offer(HistoryEntry candidate, double t) {
    if (candidate.y.rows() == 0 || candidate.y.cols() != p_) throw DimensionError("HistoryStack: entry has wrong p");
    if (candidate.y.frobenius_norm() < 1e-6) return false;

    if (!full()) {
      entries_.push_back(std::move(candidate));
      const Matrix lam = sum_gram(std::nullopt, nullptr);
      // Λ grows by a PSD term, so λmin cannot drop; clamp roundoff.
      commit(lam, std::max(lambda_min_, safe_min_eig(lam)), t);
      return true;
    }

    const Matrix cand_gram = gram(candidate.y);
    double best_lambda = lambda_min_;
    std::optional<std::size_t> best_slot;
    Matrix best_mat;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      Matrix lam = sum_gram(i, &cand_gram);
      const double lmin = safe_min_eig(lam);
      if (lmin > best_lambda) {
        best_lambda = lmin;
        best_slot = i;
        best_mat = std::move(lam);
      }
    }
    if (!best_slot || !(best_lambda > lambda_min_ + 1e-9)) return false;
    entries_[*best_slot] = std::move(candidate);
    commit(best_mat, best_lambda, t);
    return true;
  }

 private:
  static double safe_min_eig(const Matrix& m) { return std::max(0.0, min_eigenvalue(m)); }

  // Σ Y_jᵀY_j, optionally with entry `skip` replaced by `replacement`.
  Matrix sum_gram(std::optional<std::size_t> skip, const Matrix* replacement) const {
    Matrix lam(p_, p_);
    for (std::size_t j = 0; j < entries_.size(); ++j) {
      if (skip && *skip == j) {
        lam += *replacement;
      } else {
        lam += gram(entries_[j].y);
      }
    }
    return lam;
  }

  void commit(Matrix lam, double new_lambda, double t) {
    lambda_integral_ = lambda_integral_at(t);
    last_change_t_ = std::max(last_change_t_, t);
    lambda_mat_ = std::move(lam);
    lambda_min_ = new_lambda;
  }

  std::size_t capacity_;
  std::size_t p_;
  std::vector<HistoryEntry> entries_;
  Matrix lambda_mat_;
  double lambda_min_ = 0.0;
  double lambda_integral_ = 0.0;
  double last_change_t_ = 0.0;
};

/// Builds an entry from the buffer's current window and offers it to the stack.
inline bool record_candidate(HistoryStack& stack, const WindowBuffer& buf, double t) {
  if (!buf.full()) throw PreconditionError("record_candidate: window buffer does not yet span the window");
  WindowIntegrals w = buf.integrals();
  return stack.offer(HistoryEntry{t, std::move(w.dx), std::move(w.f), std::move(w.y), std::move(w.g)}, t);
}

namespace detail {

inline Vector stack_innovation(const HistoryStack& stack, const Vector& theta_hat) {
  Vector acc(theta_hat.size());
  for (const HistoryEntry& e : stack.entries()) {
    if (e.y.cols() != theta_hat.size()) throw DimensionError("update law: theta_hat has wrong dimension");
    acc += transpose_times(e.y, e.residual(theta_hat));
  }
  return acc;
}

}  // namespace detail

/// θ̂̇ = γ Σ Y_jᵀ(Δx_j − F_j − Y_jθ̂ − G_j).
inline Vector cbf_update_rate(const HistoryStack& stack, const Vector& theta_hat, double gamma) {
  if (gamma < 0.0) throw ValidationError("cbf_update_rate: gamma must be nonnegative");
  return gamma * detail::stack_innovation(stack, theta_hat);
}

/// θ̂̇ = Γ L_YVᵀ + γΓ Σ Y_jᵀ(Δx_j − F_j − Y_jθ̂ − G_j).
inline Vector clf_update_rate(const HistoryStack& stack, const Vector& theta_hat, const Vector& lyv,
                              const Matrix& gain, double gamma) {
  if (gamma < 0.0) throw ValidationError("clf_update_rate: gamma must be nonnegative");
  if (gain.rows() != theta_hat.size() || gain.cols() != theta_hat.size() || lyv.size() != theta_hat.size())
    throw DimensionError("clf_update_rate: dimension mismatch");
  return gain * (lyv + gamma * detail::stack_innovation(stack, theta_hat));
}

/// ν(t) = ‖ϑ̃‖ exp(−γ ∫₀ᵗ λ).
inline double nu_bound(const HistoryStack& stack, double vartheta_norm, double gamma, double t) {
  if (vartheta_norm < 0.0) throw ValidationError("nu_bound: worst-case error norm must be nonnegative");
  return vartheta_norm * std::exp(-gamma * stack.lambda_integral_at(t));
}

}  // namespace racbf
