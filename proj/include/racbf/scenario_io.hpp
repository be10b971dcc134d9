#pragma once

// Scenario files: flat `key = value` lines with dotted keys and `#` comments.
// Numbers may be small arithmetic expressions over `pi`; vectors are comma
// separated and matrices list their rows separated by `;`.

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "racbf/errors.hpp"
#include "racbf/numerics.hpp"
#include "racbf/sim.hpp"

namespace racbf {

/// Schema violation with the offending line (0 when not tied to one line).
class ScenarioError : public ValidationError {
 public:
  ScenarioError(const std::string& source, int line, const std::string& what)
      : ValidationError(source + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " + what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.push_back(trim(s.substr(start, i - start)));
      start = i + 1;
    }
  }
  return out;
}

// Recursive descent over + - * / ( ) with numeric literals and `pi`.
class ExprParser {
 public:
  explicit ExprParser(std::string_view s) : s_(s) {}

  std::optional<double> parse() {
    auto v = expr();
    skip();
    if (!v || pos_ != s_.size()) return std::nullopt;
    return v;
  }

 private:
  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool eat(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  std::optional<double> expr() {
    auto v = term();
    while (v) {
      if (eat('+')) {
        auto r = term();
        if (!r) return std::nullopt;
        *v += *r;
      } else if (eat('-')) {
        auto r = term();
        if (!r) return std::nullopt;
        *v -= *r;
      } else {
        break;
      }
    }
    return v;
  }
  std::optional<double> term() {
    auto v = unary();
    while (v) {
      if (eat('*')) {
        auto r = unary();
        if (!r) return std::nullopt;
        *v *= *r;
      } else if (eat('/')) {
        auto r = unary();
        if (!r) return std::nullopt;
        *v /= *r;
      } else {
        break;
      }
    }
    return v;
  }
  std::optional<double> unary() {
    if (eat('-')) {
      auto v = unary();
      return v ? std::optional<double>(-*v) : std::nullopt;
    }
    if (eat('+')) return unary();
    return primary();
  }
  std::optional<double> primary() {
    skip();
    if (eat('(')) {
      auto v = expr();
      if (!v || !eat(')')) return std::nullopt;
      return v;
    }
    if (s_.substr(pos_, 2) == "pi") {
      pos_ += 2;
      return std::numbers::pi;
    }
    const std::string rest(s_.substr(pos_));
    char* end = nullptr;
    const double v = std::strtod(rest.c_str(), &end);
    if (end == rest.c_str()) return std::nullopt;
    pos_ += static_cast<std::size_t>(end - rest.c_str());
    return v;
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

inline std::string fmt_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt_vector(const Vector& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + fmt_number(v[i]);
  return out;
}

inline std::string fmt_matrix(const Matrix& m) {
  std::string out;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    if (i) out += "; ";
    for (std::size_t j = 0; j < m.cols(); ++j) out += (j ? ", " : "") + fmt_number(m(i, j));
  }
  return out;
}

}  // namespace detail

/// Parses a scenario. `source` names the input in error messages.
inline ScenarioConfig parse_scenario(std::string_view text, const std::string& source = "<scenario>") {
  ScenarioConfig cfg;
  int line_no = 0;
  std::map<std::string, int> seen;

  auto fail = [&](const std::string& what) -> ScenarioError { return ScenarioError(source, line_no, what); };

  std::string key, raw;  // current line, for value converters
  auto number = [&](const std::string& s) {
    const auto v = detail::ExprParser(s).parse();
    if (!v || !std::isfinite(*v)) throw fail(key + ": expected a number, got '" + s + "'");
    return *v;
  };
  auto num = [&] { return number(raw); };
  auto vec = [&] {
    std::vector<double> vals;
    for (const auto& part : detail::split(raw, ',')) vals.push_back(number(part));
    return Vector(std::move(vals));
  };
  auto mat = [&] {
    std::vector<std::vector<double>> rows;
    for (const auto& r : detail::split(raw, ';')) {
      std::vector<double> row;
      for (const auto& part : detail::split(r, ',')) row.push_back(number(part));
      if (!rows.empty() && rows.front().size() != row.size()) throw fail(key + ": matrix rows differ in length");
      rows.push_back(std::move(row));
    }
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
    return m;
  };
  auto count = [&] {
    const double v = num();
    if (v < 0.0 || v != std::floor(v)) throw fail(key + ": expected a nonnegative integer, got '" + raw + "'");
    return static_cast<std::size_t>(v);
  };
  auto flag = [&] {
    if (raw == "true") return true;
    if (raw == "false") return false;
    throw fail(key + ": expected true or false, got '" + raw + "'");
  };
  LyapunovInput& lyap_ref = cfg.lyapunov.emplace();
  bool any_lyapunov = false;

  const std::map<std::string, std::function<void()>> handlers = {
      {"scenario.name", [&] { cfg.name = raw; }},
      {"system.kind", [&] { cfg.system.kind = raw; }},
      {"system.mass", [&] { cfg.system.mass = num(); }},
      {"system.length", [&] { cfg.system.length = num(); }},
      {"system.theta_true", [&] { cfg.system.theta_true = vec(); }},
      {"lyapunov.P", [&] { lyap_ref.P = mat(), any_lyapunov = true; }},
      {"lyapunov.c3", [&] { lyap_ref.c3 = num(), any_lyapunov = true; }},
      {"lyapunov.Q", [&] { lyap_ref.Q = mat(), any_lyapunov = true; }},
      {"lyapunov.Q_formula",
       [&] {
         static const std::regex form(R"(^(.*)\*\s*lambda_min\(Q\)\s*/\s*lambda_max\(P\)$)");
         std::smatch m;
         if (!std::regex_match(raw, m, form))
           throw fail("lyapunov.Q_formula: expected '<scale> * lambda_min(Q) / lambda_max(P)', got '" + raw + "'");
         lyap_ref.q_scale = number(detail::trim(m[1].str()));
         any_lyapunov = true;
       }},
      {"theta.lower", [&] { cfg.theta_box.lower = vec(); }},
      {"theta.upper", [&] { cfg.theta_box.upper = vec(); }},
      {"theta.hat0_cbf", [&] { cfg.theta_hat0_cbf = vec(); }},
      {"theta.hat0_clf", [&] { cfg.theta_hat0_clf = vec(); }},
      {"controller.mode",
       [&] {
         const auto m = parse_controller_mode(raw);
         if (!m) throw fail("controller.mode: unknown mode '" + raw + "'");
         cfg.controller.mode = *m;
       }},
      {"controller.relax_weight", [&] { cfg.controller.relax_weight = num(); }},
      {"gains.gamma", [&] { cfg.controller.gamma = num(); }},
      {"gains.Gamma", [&] { cfg.controller.gain = mat(); }},
      {"stack.M", [&] { cfg.stack.capacity = count(); }},
      {"stack.dT", [&] { cfg.stack.window = num(); }},
      {"stack.cadence", [&] { cfg.stack.cadence = count(); }},
      {"sim.x0", [&] { cfg.x0 = vec(); }},
      {"sim.dt", [&] { cfg.dt = num(); }},
      {"sim.duration", [&] { cfg.duration = num(); }},
      {"sim.hold",
       [&] {
         const auto h = parse_input_hold(raw);
         if (!h) throw fail("sim.hold: expected zero_order or stagewise, got '" + raw + "'");
         cfg.hold = *h;
       }},
      {"sim.quadrature",
       [&] {
         const auto q = parse_quadrature(raw);
         if (!q) throw fail("sim.quadrature: expected trapezoid or integrator, got '" + raw + "'");
         cfg.quadrature = *q;
       }},
      {"verify.expect_safety_violation", [&] { cfg.verify.expect_safety_violation = flag(); }},
      {"verify.terminal_norm_max", [&] { cfg.verify.terminal_norm_max = num(); }},
  };

  struct PendingBarrier {
    BarrierSpec spec;
    int line = 0;
    bool has_kind = false, has_gains = false;
  };
  std::map<int, PendingBarrier> barriers;
  static const std::regex barrier_key(R"(^barrier\.(\d+)\.([A-Za-z_]+)$)");

  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string stripped = detail::trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) throw fail("expected 'key = value', got '" + stripped + "'");
    key = detail::trim(std::string_view(stripped).substr(0, eq));
    raw = detail::trim(std::string_view(stripped).substr(eq + 1));
    if (key.empty()) throw fail("missing key before '='");
    if (raw.empty()) throw fail(key + ": missing value");
    if (auto [it, fresh] = seen.emplace(key, line_no); !fresh)
      throw fail("duplicate key '" + key + "' (first set on line " + std::to_string(it->second) + ")");

    std::smatch m;
    if (std::regex_match(key, m, barrier_key)) {
      const int idx = std::stoi(m[1].str());
      const std::string field = m[2].str();
      auto& pb = barriers[idx];
      if (pb.line == 0) pb.line = line_no;
      BarrierSpec& b = pb.spec;
      if (field == "label") {
        b.label = raw;
      } else if (field == "kind") {
        if (raw != "disk" && raw != "halfspace") throw fail(key + ": kind must be disk or halfspace");
        b.kind = raw, pb.has_kind = true;
      } else if (field == "center") {
        b.center = vec();
      } else if (field == "radius") {
        b.radius = num();
      } else if (field == "coeffs") {
        b.coeffs = vec();
      } else if (field == "offset") {
        b.offset = num();
      } else if (field == "gains") {
        const Vector g = vec();
        b.gains = g.values();
        pb.has_gains = true;
      } else {
        throw fail("unknown barrier field '" + field + "'");
      }
      continue;
    }
    const auto h = handlers.find(key);
    if (h == handlers.end()) throw fail("unknown key '" + key + "'");
    h->second();
  }

  line_no = 0;
  for (const char* required : {"system.kind", "sim.x0", "theta.lower", "theta.upper", "theta.hat0_cbf",
                               "theta.hat0_clf"})
    if (!seen.count(required)) throw fail(std::string("missing required key '") + required + "'");
  if (!any_lyapunov) {
    cfg.lyapunov.reset();
  } else {
    if (!seen.count("lyapunov.P")) throw fail("lyapunov.P is required when any lyapunov key is given");
    const bool has_c3 = seen.count("lyapunov.c3") > 0;
    const bool has_formula = seen.count("lyapunov.Q_formula") > 0 || seen.count("lyapunov.Q") > 0;
    if (has_c3 == has_formula) throw fail("give exactly one of lyapunov.c3 or lyapunov.Q with lyapunov.Q_formula");
    if (has_formula && (!lyap_ref.Q || !lyap_ref.q_scale))
      throw fail("lyapunov.Q and lyapunov.Q_formula must be given together");
  }
  for (auto& [idx, pb] : barriers) {
    line_no = pb.line;
    if (!pb.has_kind) throw fail("barrier." + std::to_string(idx) + ".kind is required");
    if (!pb.has_gains) throw fail("barrier." + std::to_string(idx) + ".gains is required");
    if (pb.spec.label.empty()) pb.spec.label = "barrier" + std::to_string(idx);
    cfg.barriers.push_back(pb.spec);
  }

  // The estimation-error envelope is only certified for estimates starting in Θ.
  const ParamBox& box = cfg.theta_box;
  for (const char* k : {"theta.hat0_cbf", "theta.hat0_clf"}) {
    const Vector& v = std::string_view(k) == "theta.hat0_cbf" ? cfg.theta_hat0_cbf : cfg.theta_hat0_clf;
    if (v.size() == box.dim() && box.lower.size() == box.upper.size() && !box.contains(v)) {
      line_no = seen[k];
      throw fail(std::string(k) +
                 " lies outside the parameter box [theta.lower, theta.upper]; the estimation-error envelope "
                 "nu(t) is only certified for initial estimates in Theta");
    }
  }

  try {
    (void)build_scenario(cfg);
  } catch (const ScenarioError&) {
    throw;
  } catch (const std::exception& e) {
    // Point at the line that most likely caused it: a named barrier, or a key quoted in the message.
    const std::string msg = e.what();
    line_no = 0;
    for (const auto& [idx, pb] : barriers)
      if (msg.find("'" + pb.spec.label + "'") != std::string::npos || msg.find("barrier " + std::to_string(idx)) != std::string::npos)
        line_no = pb.line;
    if (line_no == 0)
      for (const auto& [k, ln] : seen)
        if (msg.find(k) != std::string::npos) line_no = ln;
    throw fail(msg);
  }
  return cfg;
}

inline ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError(path, 0, "cannot open scenario file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str(), path);
}

/// Canonical scenario text: fixed key order, 17 significant digits. Parsing it
/// back yields the same config.
inline std::string dump_scenario(const ScenarioConfig& c) {
  using detail::fmt_matrix, detail::fmt_number, detail::fmt_vector;
  std::string out;
  auto put = [&](const std::string& k, const std::string& v) { out += k + " = " + v + "\n"; };
  put("scenario.name", c.name);
  put("system.kind", c.system.kind);
  put("system.mass", fmt_number(c.system.mass));
  put("system.length", fmt_number(c.system.length));
  if (c.system.theta_true) put("system.theta_true", fmt_vector(*c.system.theta_true));
  for (std::size_t i = 0; i < c.barriers.size(); ++i) {
    const auto& b = c.barriers[i];
    const std::string pre = "barrier." + std::to_string(i + 1) + ".";
    put(pre + "label", b.label);
    put(pre + "kind", b.kind);
    if (b.kind == "disk") {
      put(pre + "center", fmt_vector(b.center));
      put(pre + "radius", fmt_number(b.radius));
    } else {
      put(pre + "coeffs", fmt_vector(b.coeffs));
      put(pre + "offset", fmt_number(b.offset));
    }
    put(pre + "gains", fmt_vector(Vector(b.gains)));
  }
  if (c.lyapunov) {
    put("lyapunov.P", fmt_matrix(c.lyapunov->P));
    if (c.lyapunov->c3) {
      put("lyapunov.c3", fmt_number(*c.lyapunov->c3));
    } else {
      if (c.lyapunov->Q) put("lyapunov.Q", fmt_matrix(*c.lyapunov->Q));
      if (c.lyapunov->q_scale)
        put("lyapunov.Q_formula", fmt_number(*c.lyapunov->q_scale) + " * lambda_min(Q) / lambda_max(P)");
    }
  }
  put("theta.lower", fmt_vector(c.theta_box.lower));
  put("theta.upper", fmt_vector(c.theta_box.upper));
  put("theta.hat0_cbf", fmt_vector(c.theta_hat0_cbf));
  put("theta.hat0_clf", fmt_vector(c.theta_hat0_clf));
  put("controller.mode", std::string(to_string(c.controller.mode)));
  put("controller.relax_weight", fmt_number(c.controller.relax_weight));
  put("gains.gamma", fmt_number(c.controller.gamma));
  put("gains.Gamma", fmt_matrix(c.controller.gain));
  put("stack.M", std::to_string(c.stack.capacity));
  put("stack.dT", fmt_number(c.stack.window));
  put("stack.cadence", std::to_string(c.stack.cadence));
  put("sim.x0", fmt_vector(c.x0));
  put("sim.dt", fmt_number(c.dt));
  put("sim.duration", fmt_number(c.duration));
  put("sim.hold", std::string(to_string(c.hold)));
  put("sim.quadrature", std::string(to_string(c.quadrature)));
  put("verify.expect_safety_violation", c.verify.expect_safety_violation ? "true" : "false");
  if (c.verify.terminal_norm_max) put("verify.terminal_norm_max", fmt_number(*c.verify.terminal_norm_max));
  return out;
}

/// 64-bit FNV-1a of the canonical text, as 16 hex digits.
inline std::string config_hash(const ScenarioConfig& c) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : dump_scenario(c)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace racbf
