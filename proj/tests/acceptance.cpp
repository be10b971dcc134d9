// One line per acceptance criterion, computed from raw trace rows. Exit 0 iff all pass.

#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "racbf/scenario_io.hpp"
#include "racbf/selftest.hpp"
#include "racbf/sim.hpp"
#include "racbf/verify.hpp"

using namespace racbf;

namespace {

constexpr double kPi = std::numbers::pi;

ScenarioConfig bundled(const std::string& name) { return load_scenario(std::string(RACBF_SCENARIO_DIR) + "/" + name); }

struct Outcome {
  bool pass;
  std::string detail;
};

int failures = 0;

void report(int id, const char* title, const Outcome& o) {
  std::printf("[%s] %2d %-34s %s\n", o.pass ? "PASS" : "FAIL", id, title, o.detail.c_str());
  std::fflush(stdout);
  failures += !o.pass;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

const TraceRow& row_at(const std::vector<TraceRow>& rows, double t) {
  for (const auto& r : rows)
    if (r.t >= t - 1e-9) return r;
  return rows.back();
}

double min_psi_all(const std::vector<TraceRow>& rows) {
  double m = INFINITY;
  for (const auto& r : rows)
    for (const auto& v : r.psi)
      for (double p : v) m = std::min(m, p);
  return m;
}

double max_abs_angle(const std::vector<TraceRow>& rows) {
  double m = 0;
  for (const auto& r : rows) m = std::max(m, std::abs(r.x[0]));
  return m;
}

struct Cache {
  std::map<std::string, RunResult> runs;
  const RunResult& get(const std::string& key, const std::function<ScenarioConfig()>& make) {
    auto it = runs.find(key);
    if (it == runs.end()) it = runs.emplace(key, run(make())).first;
    return it->second;
  }
};

const char* kBundled[] = {"di_adaptive.cfg",        "di_robust.cfg",        "di_stabilize.cfg",
                          "pendulum_cascade.cfg", "pendulum_aclf_only.cfg", "pendulum_open_loop.cfg"};

// ‖z(t)‖ ≤ √(η₂/η₁)‖z(T)‖e^{−η₃(t−T)/(2η₂)}·1.001 with z = (x, θ − θ̂_clf), T = first time λ ≥ 0.9·λ(end).
Outcome exponential_bound(const std::vector<TraceRow>& rows, const Scenario& sc) {
  const auto& lyap = *sc.lyapunov;
  const Matrix gain_inv = inverse(sc.config.controller.gain);
  const Vector ge = symmetric_eigenvalues(gain_inv);
  const double lambda_low = 0.9 * rows.back().lambda;
  if (!(lambda_low > 0)) return {false, "stack never excited"};
  std::size_t t_idx = 0;
  while (t_idx < rows.size() && rows[t_idx].lambda < lambda_low) ++t_idx;
  const double eta1 = std::min(lyap.c1(), 0.5 * ge[0]);
  const double eta2 = std::max(lyap.c2(), 0.5 * ge[ge.size() - 1]);
  const double eta3 = std::min(sc.config.controller.gamma * lambda_low, lyap.c1() * lyap.c3());
  auto znorm = [&](const TraceRow& r) {
    const Vector e = sc.plant.theta_true - r.theta_hat_clf;
    return std::sqrt(r.x.squared_norm() + e.squared_norm());
  };
  const double zt = znorm(rows[t_idx]), t0 = rows[t_idx].t;
  double worst = INFINITY;
  for (std::size_t k = t_idx; k < rows.size(); ++k) {
    const double bound = std::sqrt(eta2 / eta1) * zt * std::exp(-eta3 * (rows[k].t - t0) / (2 * eta2)) * 1.001;
    worst = std::min(worst, (bound - znorm(rows[k])) / bound);
  }
  return {worst >= 0.0, fmt("T = %.3f s, rate %.5f, worst relative slack %.3e", t0, eta3 / (2 * eta2), worst)};
}

}  // namespace

int main() {
  Cache cache;
  auto bundled_run = [&](const std::string& name) -> const RunResult& {
    return cache.get(name, [&] { return bundled(name); });
  };

  // 1. envelope in every bundled scenario
  {
    double worst = INFINITY;
    std::string where;
    bool ok = true;
    for (const char* name : kBundled) {
      const RunResult& r = bundled_run(name);
      ok = ok && r.completed() && !r.rows.empty();
      for (const auto& row : r.rows) {
        const double m = row.nu + 1e-6 - row.err_cbf;
        if (m < worst) worst = m, where = name;
      }
    }
    report(1, "estimation envelope", {ok && worst >= 0.0, fmt("worst nu + 1e-6 - |err| = %.3e", worst) + " (" + where + ")"});
  }

  // 2. forward invariance: every sweep point adaptive and robust, plus the pendulum cascade
  {
    bool ok = true;
    std::string detail;
    const double uppers[] = {1.5, 2.0, 2.5, 3.0};
    for (double hi : uppers)
      for (double gamma : {10.0, 0.0}) {
        const std::string key = fmt("di box %.2f gamma %.0f", hi, gamma);
        const RunResult& r = cache.get(key, [&] {
          ScenarioConfig c = bundled("di_adaptive.cfg");
          c.theta_box = {Vector{0.0, 0.0}, Vector{hi, hi}};
          c.controller.gamma = gamma;
          return c;
        });
        const double m = min_psi_all(r.rows);
        ok = ok && r.completed() && m >= -1e-3;
        char buf[64];
        std::snprintf(buf, sizeof buf, "[0,%.1f]^2 %s %.4f; ", hi, gamma > 0 ? "ad" : "rb", m);
        detail += buf;
      }
    const RunResult& pc = bundled_run("pendulum_cascade.cfg");
    const double mp = min_psi_all(pc.rows);
    ok = ok && pc.completed() && mp >= -1e-3;
    detail += fmt("pendulum %.4f", mp);
    report(2, "forward invariance (min psi)", {ok, detail});
  }

  // 3. parameter convergence at 15 s
  {
    const RunResult& r = bundled_run("di_adaptive.cfg");
    const TraceRow& row = row_at(r.rows, 15.0);
    const bool ok = r.completed() && row.err_cbf <= 0.1 && row.err_clf <= 0.1;
    report(3, "parameter convergence at 15 s", {ok, fmt("t = %.3f |err_cbf| = %.3e |err_clf| = %.3e", row.t, row.err_cbf, row.err_clf)});
  }

  // 4. adaptive vs robust at [0,3]^2
  {
    const RunResult& a = bundled_run("di_adaptive.cfg");
    const RunResult& b = bundled_run("di_robust.cfg");
    const double na = a.rows.back().x.norm(), nb = b.rows.back().x.norm();
    const bool ok = a.completed() && b.completed() && a.rows.back().t >= 20.0 - 1e-9 && na <= 0.1 && na < nb;
    report(4, "adaptive beats robust", {ok, fmt("|x(20)| adaptive %.4e robust %.4e", na, nb)});
  }

  // 5. pendulum cascade safe and stabilized
  {
    const RunResult& r = bundled_run("pendulum_cascade.cfg");
    const double mx = max_abs_angle(r.rows), fin = r.rows.back().x.norm();
    const bool ok = r.completed() && mx <= kPi / 4 + 1e-3 && fin <= 0.05;
    report(5, "pendulum cascade safety + stability", {ok, fmt("max|x1| = %.4f (limit %.4f) |x(10)| = %.4e", mx, kPi / 4 + 1e-3, fin)});
  }

  // 6. pendulum CLF alone violates the limit but stabilizes
  {
    const RunResult& r = bundled_run("pendulum_aclf_only.cfg");
    const double mx = max_abs_angle(r.rows), fin = r.rows.back().x.norm();
    const bool ok = r.completed() && mx > kPi / 4 && fin <= 0.05;
    report(6, "pendulum CLF-only violation", {ok, fmt("max|x1| = %.4f > %.4f, |x(10)| = %.4e", mx, kPi / 4, fin)});
  }

  // 7. attractivity from the unsafe start
  {
    const RunResult& r = bundled_run("pendulum_open_loop.cfg");
    std::optional<double> tstar;
    for (auto it = r.rows.rbegin(); it != r.rows.rend(); ++it) {
      double m = INFINITY;
      for (const auto& v : it->psi) m = std::min(m, v[0]);
      if (m < -1e-3) break;
      tstar = it->t;
    }
    const bool unsafe_start = r.rows.front().x[0] > kPi / 4;
    const bool ok = r.completed() && unsafe_start && tstar && *tstar <= 10.0;
    report(7, "attractivity from unsafe start", {ok, tstar ? fmt("x1(0) = %.4f, t* = %.3f s", r.rows.front().x[0], *tstar)
                                                           : std::string("never re-enters")});
  }

  // 8. exponential bound on the barrier-free double integrator
  {
    const RunResult& r = bundled_run("di_stabilize.cfg");
    const Scenario sc = build_scenario(bundled("di_stabilize.cfg"));
    Outcome o = r.completed() ? exponential_bound(r.rows, sc) : Outcome{false, r.abort_reason};
    report(8, "exponential bound", o);
  }

  // 9. composite Lyapunov function nonincreasing on CLF-only runs
  {
    double worst = -INFINITY;
    bool ok = true;
    for (const char* name : {"di_stabilize.cfg", "pendulum_aclf_only.cfg"}) {
      const RunResult& r = bundled_run(name);
      ok = ok && r.completed();
      for (std::size_t k = 1; k < r.rows.size(); ++k) worst = std::max(worst, r.rows[k].va - r.rows[k - 1].va);
    }
    report(9, "Va nonincreasing", {ok && worst <= 1e-6, fmt("max per-step increase %.3e (limit 1e-6)", worst)});
  }

  // 10. numeric oracle suites
  {
    const auto rows = run_selftest({});
    std::string detail;
    for (const auto& r : rows)
      if (!r.passed) detail += r.name + " ";
    report(10, "oracle suites (selftest)", {selftest_passed(rows), detail.empty() ? fmt("%.0f checks pass", double(rows.size())) : "failing: " + detail});
  }

  // 11. determinism and grid convergence
  {
    bool ok = true;
    std::string detail;
    for (const char* name : {"di_adaptive.cfg", "pendulum_cascade.cfg"}) {
      const RunResult& a = bundled_run(name);
      const RunResult b = run(bundled(name));
      const bool same = a.rows == b.rows;
      ScenarioConfig fine = bundled(name);
      fine.dt *= 0.5;
      fine.stack.cadence *= 2;  // same recording times
      const RunResult h = run(fine);
      const double diff = std::abs(h.rows.back().x.norm() - a.rows.back().x.norm());
      ok = ok && same && h.completed() && diff < 1e-4;
      detail += std::string(name) + (same ? " bit-identical" : " DIFFERS") + fmt(", dt/2 diff %.2e; ", diff);
    }
    report(11, "determinism + dt halving", {ok, detail});
  }

  std::printf("%s: %d of 11 criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
