#pragma once

// trace.csv: one row per trace snapshot, numbers at 17 significant digits so
// that reading a written trace reproduces it exactly.
//
// Columns: t, x1..xn, u1..um, <label>_psi0..<label>_psi{r-1} per barrier, V,
// Va, th_cbf1..p, th_clf1..p, err_cbf, err_clf, nu, lambda, lambda_int, active
// (labels joined by '|'), slack.
//
// A run that aborts on an infeasible QP ends with a diagnostic row at the
// failing state: u = 0 and `active` lists the conflicting barriers.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "racbf/errors.hpp"
#include "racbf/numerics.hpp"
#include "racbf/sim.hpp"

namespace racbf {

struct TraceLayout {
  std::size_t n = 0, m = 0, p = 0;
  std::vector<std::string> barrier_labels;
  std::vector<std::size_t> barrier_orders;

  std::vector<std::string> header() const {
    std::vector<std::string> h{"t"};
    for (std::size_t i = 1; i <= n; ++i) h.push_back("x" + std::to_string(i));
    for (std::size_t i = 1; i <= m; ++i) h.push_back("u" + std::to_string(i));
    for (std::size_t b = 0; b < barrier_labels.size(); ++b)
      for (std::size_t k = 0; k < barrier_orders[b]; ++k) h.push_back(barrier_labels[b] + "_psi" + std::to_string(k));
    h.push_back("V");
    h.push_back("Va");
    for (std::size_t i = 1; i <= p; ++i) h.push_back("th_cbf" + std::to_string(i));
    for (std::size_t i = 1; i <= p; ++i) h.push_back("th_clf" + std::to_string(i));
    for (const char* c : {"err_cbf", "err_clf", "nu", "lambda", "lambda_int", "active", "slack"}) h.push_back(c);
    return h;
  }
};

inline TraceLayout layout_of(const Scenario& sc) {
  TraceLayout l{sc.plant.model.n(), sc.plant.model.m(), sc.plant.model.p(), {}, {}};
  for (const auto& b : sc.barriers) {
    l.barrier_labels.push_back(b.label());
    l.barrier_orders.push_back(b.order());
  }
  return l;
}

namespace detail {

inline void put_number(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

inline double parse_cell(const std::string& s, std::size_t line) {
  const char* begin = s.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0')
    throw ValidationError("trace line " + std::to_string(line) + ": not a number: '" + s + "'");
  return v;
}

}  // namespace detail

inline void write_trace(std::ostream& os, const TraceLayout& layout, const std::vector<TraceRow>& rows) {
  const auto header = layout.header();
  for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
  os << '\n';
  std::string line;
  for (const auto& r : rows) {
    if (r.x.size() != layout.n || r.u.size() != layout.m || r.psi.size() != layout.barrier_labels.size())
      throw DimensionError("write_trace: row does not match the trace layout");
    line.clear();
    auto num = [&](double v) {
      if (!line.empty()) line += ',';
      detail::put_number(line, v);
    };
    num(r.t);
    for (double v : r.x) num(v);
    for (double v : r.u) num(v);
    for (const auto& psi : r.psi)
      for (double v : psi) num(v);
    num(r.v);
    num(r.va);
    for (double v : r.theta_hat_cbf) num(v);
    for (double v : r.theta_hat_clf) num(v);
    num(r.err_cbf);
    num(r.err_clf);
    num(r.nu);
    num(r.lambda);
    num(r.lambda_int);
    line += ',';
    for (std::size_t i = 0; i < r.active.size(); ++i) line += (i ? "|" : "") + r.active[i];
    num(r.slack);
    os << line << '\n';
  }
}

struct TraceFile {
  TraceLayout layout;
  std::vector<TraceRow> rows;
};

/// Reads a trace, recovering the layout from the header.
inline TraceFile read_trace(std::istream& is) {
  TraceFile tf;
  std::string line;
  if (!std::getline(is, line)) throw ValidationError("trace: missing header");
  std::vector<std::string> cols;
  {
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
  }
  static const std::regex psi_col(R"(^(.+)_psi(\d+)$)");
  TraceLayout& l = tf.layout;
  for (const auto& c : cols) {
    std::smatch m;
    if (std::regex_match(c, m, psi_col)) {
      const std::string label = m[1].str();
      if (l.barrier_labels.empty() || l.barrier_labels.back() != label) {
        l.barrier_labels.push_back(label);
        l.barrier_orders.push_back(0);
      }
      ++l.barrier_orders.back();
    } else if (std::regex_match(c, std::regex(R"(^x\d+$)"))) {
      ++l.n;
    } else if (std::regex_match(c, std::regex(R"(^u\d+$)"))) {
      ++l.m;
    } else if (std::regex_match(c, std::regex(R"(^th_cbf\d+$)"))) {
      ++l.p;
    }
  }
  if (l.header() != cols) throw ValidationError("trace: header does not match the documented column order");

  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',') {
        cells.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    }
    if (cells.size() != cols.size())
      throw ValidationError("trace line " + std::to_string(line_no) + ": expected " + std::to_string(cols.size()) +
                            " cells, got " + std::to_string(cells.size()));
    std::size_t k = 0;
    auto next = [&] { return detail::parse_cell(cells[k++], line_no); };
    auto vec = [&](std::size_t n) {
      Vector v(n);
      for (std::size_t i = 0; i < n; ++i) v[i] = next();
      return v;
    };
    TraceRow r;
    r.t = next();
    r.x = vec(l.n);
    r.u = vec(l.m);
    for (std::size_t order : l.barrier_orders) r.psi.push_back(vec(order));
    r.v = next();
    r.va = next();
    r.theta_hat_cbf = vec(l.p);
    r.theta_hat_clf = vec(l.p);
    r.err_cbf = next();
    r.err_clf = next();
    r.nu = next();
    r.lambda = next();
    r.lambda_int = next();
    const std::string& act = cells[k++];
    if (!act.empty()) {
      std::size_t s = 0;
      for (std::size_t i = 0; i <= act.size(); ++i) {
        if (i == act.size() || act[i] == '|') {
          r.active.push_back(act.substr(s, i - s));
          s = i + 1;
        }
      }
    }
    r.slack = next();
    tf.rows.push_back(std::move(r));
  }
  return tf;
}

inline void save_trace(const std::string& path, const TraceLayout& layout, const std::vector<TraceRow>& rows) {
  std::ofstream os(path);
  if (!os) throw ValidationError("cannot write trace file " + path);
  write_trace(os, layout, rows);
}

inline TraceFile load_trace(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open trace file " + path);
  return read_trace(is);
}

}  // namespace racbf
