#pragma once

// Minimal static SVG line plots for run outputs.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "racbf/errors.hpp"
#include "racbf/sim.hpp"
#include "racbf/verify.hpp"

namespace racbf::svg {

struct Series {
  std::string name;
  std::vector<double> x, y;
  bool dashed = false;
};

struct Circle {
  double cx, cy, r;
};

struct Plot {
  std::string title, xlabel, ylabel;
  std::vector<Series> series;
  std::vector<Circle> circles;
  std::vector<double> hlines, vlines;
  bool log_y = false;
  bool equal_aspect = false;
};

namespace detail {

inline const char* color(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};
  return palette[i % 7];
}

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

inline double nice_step(double span) {
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (raw <= m * mag) return m * mag;
  return 10.0 * mag;
}

}  // namespace detail

inline std::string render(const Plot& plot) {
  const double W = 720, H = 440, left = 70, right = 150, top = 40, bottom = 50;
  const double pw = W - left - right, ph = H - top - bottom;
  auto ty = [&](double y) { return plot.log_y ? std::log10(std::max(y, 1e-16)) : y; };

  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : plot.series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      x0 = std::min(x0, s.x[i]), x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, ty(s.y[i])), y1 = std::max(y1, ty(s.y[i]));
    }
  for (const auto& c : plot.circles) {
    x0 = std::min(x0, c.cx - c.r), x1 = std::max(x1, c.cx + c.r);
    y0 = std::min(y0, c.cy - c.r), y1 = std::max(y1, c.cy + c.r);
  }
  for (double h : plot.hlines) y0 = std::min(y0, ty(h)), y1 = std::max(y1, ty(h));
  for (double v : plot.vlines) x0 = std::min(x0, v), x1 = std::max(x1, v);
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 - x0 < 1e-12) x0 -= 0.5, x1 += 0.5;
  if (y1 - y0 < 1e-12) y0 -= 0.5, y1 += 0.5;
  const double padx = 0.04 * (x1 - x0), pady = 0.06 * (y1 - y0);
  x0 -= padx, x1 += padx, y0 -= pady, y1 += pady;
  if (plot.equal_aspect) {
    const double sx = pw / (x1 - x0), sy = ph / (y1 - y0);
    if (sx > sy) {
      const double extra = (pw / sy - (x1 - x0)) / 2;
      x0 -= extra, x1 += extra;
    } else {
      const double extra = (ph / sx - (y1 - y0)) / 2;
      y0 -= extra, y1 += extra;
    }
  }
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  using detail::num;
  std::string o;
  o += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(W) + "\" height=\"" + num(H) +
       "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o += "<text x=\"" + num(left + pw / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" +
       detail::escape(plot.title) + "</text>\n";
  o += "<rect x=\"" + num(left) + "\" y=\"" + num(top) + "\" width=\"" + num(pw) + "\" height=\"" + num(ph) +
       "\" fill=\"none\" stroke=\"black\"/>\n";

  const double xs = detail::nice_step(x1 - x0), ys = detail::nice_step(y1 - y0);
  for (double v = std::ceil(x0 / xs) * xs; v <= x1; v += xs) {
    o += "<line x1=\"" + num(px(v)) + "\" y1=\"" + num(top) + "\" x2=\"" + num(px(v)) + "\" y2=\"" + num(top + ph) +
         "\" stroke=\"#ddd\"/>\n";
    o += "<text x=\"" + num(px(v)) + "\" y=\"" + num(top + ph + 16) + "\" text-anchor=\"middle\">" +
         detail::tick_label(std::abs(v) < 1e-12 * xs ? 0.0 : v) + "</text>\n";
  }
  for (double v = std::ceil(y0 / ys) * ys; v <= y1; v += ys) {
    const double shown = plot.log_y ? std::pow(10.0, v) : (std::abs(v) < 1e-12 * ys ? 0.0 : v);
    o += "<line x1=\"" + num(left) + "\" y1=\"" + num(py(v)) + "\" x2=\"" + num(left + pw) + "\" y2=\"" + num(py(v)) +
         "\" stroke=\"#ddd\"/>\n";
    o += "<text x=\"" + num(left - 6) + "\" y=\"" + num(py(v) + 4) + "\" text-anchor=\"end\">" +
         detail::tick_label(shown) + "</text>\n";
  }
  o += "<text x=\"" + num(left + pw / 2) + "\" y=\"" + num(H - 10) + "\" text-anchor=\"middle\">" +
       detail::escape(plot.xlabel) + "</text>\n";
  o += "<text transform=\"translate(16," + num(top + ph / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
       detail::escape(plot.ylabel) + "</text>\n";

  o += "<g clip-path=\"url(#plotarea)\">\n<clipPath id=\"plotarea\"><rect x=\"" + num(left) + "\" y=\"" + num(top) +
       "\" width=\"" + num(pw) + "\" height=\"" + num(ph) + "\"/></clipPath>\n";
  for (const auto& c : plot.circles)
    o += "<ellipse cx=\"" + num(px(c.cx)) + "\" cy=\"" + num(py(c.cy)) + "\" rx=\"" + num(c.r / (x1 - x0) * pw) +
         "\" ry=\"" + num(c.r / (y1 - y0) * ph) + "\" fill=\"#f4c2c2\" stroke=\"#a33\"/>\n";
  for (double h : plot.hlines)
    o += "<line x1=\"" + num(left) + "\" y1=\"" + num(py(ty(h))) + "\" x2=\"" + num(left + pw) + "\" y2=\"" +
         num(py(ty(h))) + "\" stroke=\"#a33\" stroke-dasharray=\"6,4\"/>\n";
  for (double v : plot.vlines)
    o += "<line x1=\"" + num(px(v)) + "\" y1=\"" + num(top) + "\" x2=\"" + num(px(v)) + "\" y2=\"" + num(top + ph) +
         "\" stroke=\"#a33\" stroke-dasharray=\"6,4\"/>\n";
  for (std::size_t k = 0; k < plot.series.size(); ++k) {
    const auto& s = plot.series[k];
    const std::size_t stride = std::max<std::size_t>(1, s.x.size() / 2000);
    std::string pts;
    for (std::size_t i = 0; i < s.x.size(); i += stride) pts += num(px(s.x[i])) + "," + num(py(ty(s.y[i]))) + " ";
    if (!s.x.empty()) pts += num(px(s.x.back())) + "," + num(py(ty(s.y.back())));
    o += "<polyline fill=\"none\" stroke=\"" + std::string(detail::color(k)) + "\" stroke-width=\"1.6\"" +
         (s.dashed ? " stroke-dasharray=\"5,3\"" : "") + " points=\"" + pts + "\"/>\n";
  }
  o += "</g>\n";
  for (std::size_t k = 0; k < plot.series.size(); ++k) {
    const double y = top + 12 + 18.0 * static_cast<double>(k);
    o += "<line x1=\"" + num(left + pw + 10) + "\" y1=\"" + num(y) + "\" x2=\"" + num(left + pw + 34) + "\" y2=\"" +
         num(y) + "\" stroke=\"" + detail::color(k) + "\" stroke-width=\"2\"" +
         (plot.series[k].dashed ? " stroke-dasharray=\"5,3\"" : "") + "/>\n";
    o += "<text x=\"" + num(left + pw + 40) + "\" y=\"" + num(y + 4) + "\">" + detail::escape(plot.series[k].name) +
         "</text>\n";
  }
  o += "</svg>\n";
  return o;
}

/// The six standard figures of a run, as (file name, plot).
inline std::vector<std::pair<std::string, Plot>> run_figures(const std::vector<TraceRow>& rows, const Scenario& sc) {
  std::vector<double> t;
  for (const auto& r : rows) t.push_back(r.t);
  auto column = [&](auto&& get) {
    std::vector<double> v;
    v.reserve(rows.size());
    for (const auto& r : rows) v.push_back(get(r));
    return v;
  };
  const auto& sys = sc.plant.model;
  std::vector<std::pair<std::string, Plot>> figs;

  Plot traj{"Trajectory", "", "", {}, {}, {}, {}, false, false};
  const auto& lay = sys.layout();
  if (lay.position.size() >= 2) {
    const std::size_t a = lay.position[0], b = lay.position[1];
    traj.xlabel = "x" + std::to_string(a + 1), traj.ylabel = "x" + std::to_string(b + 1);
    traj.series.push_back({"path", column([&](const TraceRow& r) { return r.x[a]; }),
                           column([&](const TraceRow& r) { return r.x[b]; }), false});
    for (const auto& bs : sc.config.barriers)
      if (bs.kind == "disk" && bs.center.size() == 2) traj.circles.push_back({bs.center[0], bs.center[1], bs.radius});
    traj.equal_aspect = true;
  } else {
    traj.title = "Phase portrait";
    traj.xlabel = "x1", traj.ylabel = "x2";
    traj.series.push_back({"path", column([](const TraceRow& r) { return r.x[0]; }),
                           column([](const TraceRow& r) { return r.x[1]; }), false});
    for (const auto& bs : sc.config.barriers)
      if (bs.kind == "halfspace" && bs.coeffs.size() == 1 && bs.coeffs[0] != 0.0)
        traj.vlines.push_back(-bs.offset / bs.coeffs[0]);
  }
  figs.emplace_back("trajectory.svg", std::move(traj));

  Plot states{"States", "t [s]", "x", {}, {}, {}, {}, false, false};
  for (std::size_t i = 0; i < sys.n(); ++i)
    states.series.push_back({"x" + std::to_string(i + 1), t, column([&](const TraceRow& r) { return r.x[i]; }), false});
  figs.emplace_back("states.svg", std::move(states));

  Plot barrier{"Barrier values h(x)", "t [s]", "h", {}, {}, {0.0}, {}, false, false};
  for (std::size_t b = 0; b < sc.barriers.size(); ++b)
    barrier.series.push_back({sc.barriers[b].label(), t, column([&](const TraceRow& r) { return r.psi[b][0]; }), false});
  if (!sc.barriers.empty())
    barrier.series.push_back({"min h", t, column([](const TraceRow& r) { return min_h(r); }), true});
  figs.emplace_back("barrier.svg", std::move(barrier));

  Plot est{"Parameter estimates", "t [s]", "theta", {}, {}, {}, {}, false, false};
  for (std::size_t i = 0; i < sys.p(); ++i) {
    est.series.push_back(
        {"cbf est " + std::to_string(i + 1), t, column([&](const TraceRow& r) { return r.theta_hat_cbf[i]; }), false});
    est.series.push_back(
        {"clf est " + std::to_string(i + 1), t, column([&](const TraceRow& r) { return r.theta_hat_clf[i]; }), true});
    est.hlines.push_back(sc.plant.theta_true[i]);
  }
  figs.emplace_back("estimates.svg", std::move(est));

  Plot env{"Estimation error and envelope", "t [s]", "norm (log)", {}, {}, {}, {}, true, false};
  env.series.push_back({"cbf error", t, column([](const TraceRow& r) { return r.err_cbf; }), false});
  env.series.push_back({"clf error", t, column([](const TraceRow& r) { return r.err_clf; }), false});
  env.series.push_back({"envelope nu", t, column([](const TraceRow& r) { return r.nu; }), true});
  figs.emplace_back("envelope.svg", std::move(env));

  Plot ctl{"Control input", "t [s]", "u", {}, {}, {}, {}, false, false};
  for (std::size_t i = 0; i < sys.m(); ++i)
    ctl.series.push_back({"u" + std::to_string(i + 1), t, column([&](const TraceRow& r) { return r.u[i]; }), false});
  figs.emplace_back("control.svg", std::move(ctl));
  return figs;
}

inline void save(const std::string& path, const Plot& plot) {
  std::ofstream os(path);
  if (!os) throw ValidationError("cannot write " + path);
  os << render(plot);
}

}  // namespace racbf::svg
