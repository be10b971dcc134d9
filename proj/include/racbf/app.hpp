#pragma once

// Command implementations behind the racbf executable. Exit codes: 0 all
// checks pass, 1 a verify check failed, 2 schema or input error, 3 the
// controller QP became infeasible (or the integration broke down).

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "racbf/scenario_io.hpp"
#include "racbf/selftest.hpp"
#include "racbf/sim.hpp"
#include "racbf/svg.hpp"
#include "racbf/trace_io.hpp"
#include "racbf/verify.hpp"
#include "racbf/version.hpp"

namespace racbf::app {

enum ExitCode : int { ok = 0, verify_failed = 1, schema_error = 2, infeasible = 3 };

struct RunSummary {
  int exit_code = ok;
  std::string status;  // completed, infeasible, numerical, invalid
  std::string message;
  double terminal_norm = std::numeric_limits<double>::quiet_NaN();
  double min_h = std::numeric_limits<double>::quiet_NaN();
  double convergence_time = std::numeric_limits<double>::quiet_NaN();
  bool checks_passed = false;
};

/// Norm below which the state counts as converged for the sweep table.
inline constexpr double kConvergedNorm = 0.05;

/// First time after which ‖x‖ stays at or below `threshold`.
inline std::optional<double> settling_time(const std::vector<TraceRow>& rows, double threshold) {
  std::optional<double> t;
  for (auto it = rows.rbegin(); it != rows.rend(); ++it) {
    if (it->x.norm() > threshold) break;
    t = it->t;
  }
  return t;
}

/// Runs one validated config and writes trace.csv, verdicts.txt,
/// manifest.json and the six figures into `out_dir`.
inline RunSummary execute_run(const ScenarioConfig& cfg, const std::string& scenario_path,
                              const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  RunSummary s;
  const Scenario sc = build_scenario(cfg);
  fs::create_directories(out_dir);

  const RunResult result = run(cfg);
  save_trace((out_dir / "trace.csv").string(), layout_of(sc), result.rows);

  VerdictReport rep;
  rep.checks.push_back({"run_completed", result.completed(), 0.0, result.abort_reason});
  const VerdictReport checks = verify(result.rows, sc);
  rep.checks.insert(rep.checks.end(), checks.checks.begin(), checks.checks.end());
  {
    std::ofstream os(out_dir / "verdicts.txt");
    os << rep.to_text();
  }
  for (const auto& [name, plot] : svg::run_figures(result.rows, sc)) svg::save((out_dir / name).string(), plot);

  s.checks_passed = rep.all_passed();
  switch (result.abort) {
    case AbortKind::none: s.status = "completed"; break;
    case AbortKind::infeasible: s.status = "infeasible"; break;
    case AbortKind::numerical: s.status = "numerical"; break;
  }
  s.message = result.abort_reason;
  s.exit_code = !result.completed() ? infeasible : (s.checks_passed ? ok : verify_failed);
  if (!result.rows.empty()) {
    s.terminal_norm = result.rows.back().x.norm();
    if (!sc.barriers.empty()) {
      s.min_h = std::numeric_limits<double>::infinity();
      for (const auto& r : result.rows) s.min_h = std::min(s.min_h, min_h(r));
    }
    if (const auto ts = settling_time(result.rows, kConvergedNorm)) s.convergence_time = *ts;
  }

  nlohmann::json manifest;
  manifest["scenario_path"] = scenario_path;
  manifest["scenario_name"] = cfg.name;
  manifest["config_hash"] = config_hash(cfg);
  manifest["toolkit_version"] = kVersion;
  manifest["output_dir"] = out_dir.string();
  manifest["status"] = s.status;
  manifest["abort_reason"] = result.abort_reason;
  manifest["rows"] = result.rows.size();
  manifest["exit_code"] = s.exit_code;
  nlohmann::json verdicts = nlohmann::json::array();
  for (const auto& c : rep.checks)
    verdicts.push_back({{"name", c.name}, {"passed", c.passed}, {"margin", c.margin}, {"detail", c.detail}});
  manifest["verdicts"] = {{"all_passed", s.checks_passed}, {"checks", verdicts}};
  std::ofstream(out_dir / "manifest.json") << manifest.dump(2) << '\n';
  return s;
}

struct RunOptions {
  std::string scenario;
  std::string out_dir;
  std::optional<double> dt;
  std::optional<double> duration;
};

inline int cmd_run(const RunOptions& opt, std::ostream& out, std::ostream& err) {
  ScenarioConfig cfg;
  try {
    cfg = load_scenario(opt.scenario);
    if (opt.dt) cfg.dt = *opt.dt;
    if (opt.duration) cfg.duration = *opt.duration;
    (void)build_scenario(cfg);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return schema_error;
  }
  const RunSummary s = execute_run(cfg, opt.scenario, opt.out_dir);
  std::ifstream verdicts(std::filesystem::path(opt.out_dir) / "verdicts.txt");
  out << verdicts.rdbuf();
  if (s.exit_code == infeasible) err << "run aborted: " << s.message << '\n';
  return s.exit_code;
}

/// Parses "a,b;c,d;…". Two numbers give the box [a,b]^p; 2p numbers give
/// lower then upper bounds.
inline std::vector<ParamBox> parse_theta_sets(const std::string& spec, std::size_t p) {
  std::vector<ParamBox> boxes;
  for (const auto& item : racbf::detail::split(spec, ';')) {
    if (item.empty()) continue;
    std::vector<double> v;
    for (const auto& part : racbf::detail::split(item, ',')) {
      const auto x = racbf::detail::ExprParser(part).parse();
      if (!x) throw ValidationError("--theta-sets: bad number '" + part + "'");
      v.push_back(*x);
    }
    ParamBox box;
    if (v.size() == 2) {
      box = {Vector(p, v[0]), Vector(p, v[1])};
    } else if (v.size() == 2 * p) {
      box = {Vector(std::vector<double>(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(p))),
             Vector(std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(p), v.end()))};
    } else {
      throw ValidationError("--theta-sets: each set needs 2 or " + std::to_string(2 * p) + " numbers, got '" + item +
                            "'");
    }
    box.validate();
    boxes.push_back(std::move(box));
  }
  if (boxes.empty()) throw ValidationError("--theta-sets: no parameter sets given");
  return boxes;
}

inline const char* kDefaultThetaSets = "0,1.5;0,2;0,2.5;0,3";

struct SweepOptions {
  std::string scenario;
  std::string theta_sets = kDefaultThetaSets;
  std::vector<std::string> modes{"adaptive", "robust"};
  std::string out_dir;
};

inline std::string csv_number(double v) {
  if (!std::isfinite(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline int cmd_sweep(const SweepOptions& opt, std::ostream& out, std::ostream& err) {
  namespace fs = std::filesystem;
  ScenarioConfig base;
  std::vector<ParamBox> boxes;
  try {
    base = load_scenario(opt.scenario);
    boxes = parse_theta_sets(opt.theta_sets, build_plant(base.system).model.p());
    for (const auto& m : opt.modes)
      if (m != "adaptive" && m != "robust") throw ValidationError("--modes: expected adaptive or robust, got '" + m + "'");
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return schema_error;
  }

  struct Point {
    std::size_t index;
    std::string mode;
    ParamBox box;
    fs::path dir;
  };
  std::vector<Point> points;
  for (std::size_t i = 0; i < boxes.size(); ++i)
    for (const auto& m : opt.modes)
      points.push_back({i, m, boxes[i], fs::path(opt.out_dir) / ("point" + std::to_string(i + 1) + "_" + m)});

  std::vector<std::future<RunSummary>> jobs;
  for (const auto& pt : points) {
    jobs.push_back(std::async(std::launch::async, [&base, &opt, pt] {
      ScenarioConfig cfg = base;
      cfg.theta_box = pt.box;
      if (pt.mode == "robust") {
        cfg.controller.gamma = 0.0;
        // the frozen-estimate baseline is only held to safety, not to the convergence target
        cfg.verify.terminal_norm_max.reset();
      }
      try {
        (void)build_scenario(cfg);
      } catch (const std::exception& e) {
        RunSummary s;
        s.exit_code = schema_error;
        s.status = "invalid";
        s.message = e.what();
        return s;
      }
      try {
        return execute_run(cfg, opt.scenario, pt.dir);
      } catch (const std::exception& e) {
        RunSummary s;
        s.exit_code = schema_error;
        s.status = "error";
        s.message = e.what();
        return s;
      }
    }));
  }

  fs::create_directories(opt.out_dir);
  std::ofstream csv(fs::path(opt.out_dir) / "comparison.csv");
  csv << "point,mode,theta_lower,theta_upper,status,exit_code,terminal_norm,min_h,convergence_time,checks_passed\n";
  int worst = ok;
  for (std::size_t k = 0; k < points.size(); ++k) {
    const RunSummary s = jobs[k].get();
    const auto& pt = points[k];
    auto join = [](const Vector& v) {
      std::string r;
      for (std::size_t i = 0; i < v.size(); ++i) r += (i ? " " : "") + csv_number(v[i]);
      return r;
    };
    csv << pt.index + 1 << ',' << pt.mode << ',' << join(pt.box.lower) << ',' << join(pt.box.upper) << ','
        << s.status << ',' << s.exit_code << ',' << csv_number(s.terminal_norm) << ',' << csv_number(s.min_h) << ','
        << csv_number(s.convergence_time) << ',' << (s.checks_passed ? "true" : "false") << '\n';
    out << pt.dir.filename().string() << ": " << s.status << " exit " << s.exit_code << " |x(end)| "
        << csv_number(s.terminal_norm) << " min h " << csv_number(s.min_h) << '\n';
    if (!s.message.empty()) err << pt.dir.filename().string() << ": " << s.message << '\n';
    worst = std::max(worst, s.exit_code);
  }
  return worst;
}

inline int cmd_selftest(bool inject_fault, std::ostream& out) {
  const auto rows = run_selftest({inject_fault});
  out << format_selftest(rows);
  if (!selftest_passed(rows)) {
    out << "failing:";
    for (const auto& r : rows)
      if (!r.passed) out << ' ' << r.name;
    out << '\n';
    return verify_failed;
  }
  return ok;
}

inline int cmd_verify(const std::string& trace_path, const std::string& scenario_path, std::ostream& out,
                      std::ostream& err) {
  try {
    const ScenarioConfig cfg = load_scenario(scenario_path);
    const Scenario sc = build_scenario(cfg);
    const TraceFile tf = load_trace(trace_path);
    const TraceLayout expect = layout_of(sc);
    if (tf.layout.header() != expect.header())
      throw ValidationError("trace columns do not match the scenario (system dimensions or barrier labels differ)");
    const VerdictReport rep = verify(tf.rows, sc);
    out << rep.to_text();
    return rep.all_passed() ? ok : verify_failed;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return schema_error;
  }
}

}  // namespace racbf::app
