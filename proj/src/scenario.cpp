#include "tocp/scenario.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <numbers>
#include <regex>
#include <set>
#include <sstream>

#include "tocp/error.hpp"

#ifndef TOCP_VERSION
#define TOCP_VERSION "0.0.0"
#endif

namespace tocp {

using nlohmann::json;

namespace {

// JSON pointer -> 1-based line of the key (or array element) in the source text.
std::map<std::string, int> locate_lines(const std::string& text) {
  std::map<std::string, int> lines;
  struct Frame {
    bool array;
    int index;
    std::string key;
    std::string base;
  };
  std::vector<Frame> stack;
  int line = 1;
  std::string pending_key;
  bool have_key = false;
  auto escape = [](const std::string& k) {
    std::string out;
    for (char c : k) {
      if (c == '~') out += "~0";
      else if (c == '/') out += "~1";
      else out += c;
    }
    return out;
  };
  auto current_path = [&]() -> std::string {
    if (stack.empty()) return "";
    const Frame& f = stack.back();
    if (f.array) return f.base + "/" + std::to_string(f.index);
    return f.base + "/" + escape(f.key);
  };
  auto value_start = [&]() {
    if (!stack.empty() && stack.back().array) lines.emplace(current_path(), line);
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '\n') {
      ++line;
    } else if (c == '"') {
      std::string s;
      ++i;
      for (; i < text.size() && text[i] != '"'; ++i) {
        if (text[i] == '\\' && i + 1 < text.size()) {
          s += text[++i];
        } else {
          if (text[i] == '\n') ++line;
          s += text[i];
        }
      }
      std::size_t j = i + 1;
      while (j < text.size() && std::isspace(static_cast<unsigned char>(text[j]))) ++j;
      if (!stack.empty() && !stack.back().array && j < text.size() && text[j] == ':' && !have_key) {
        stack.back().key = s;
        lines.emplace(current_path(), line);
        have_key = true;
      } else {
        value_start();
        have_key = false;
      }
    } else if (c == '{' || c == '[') {
      value_start();
      const std::string base = current_path();
      stack.push_back({c == '[', 0, "", base});
      have_key = false;
    } else if (c == '}' || c == ']') {
      if (!stack.empty()) stack.pop_back();
      have_key = false;
    } else if (c == ',') {
      if (!stack.empty() && stack.back().array) ++stack.back().index;
      have_key = false;
    } else if (c == ':') {
      // value follows the key
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      // bare literal: number, true, false, null
      value_start();
      while (i + 1 < text.size() && std::string(",}]\n \t\r").find(text[i + 1]) == std::string::npos) ++i;
      have_key = false;
    }
  }
  return lines;
}

class Reader {
 public:
  Reader(std::string origin, std::map<std::string, int> lines)
      : origin_(std::move(origin)), lines_(std::move(lines)) {}

  [[noreturn]] void error(const std::string& ptr, const std::string& msg) const {
    std::ostringstream out;
    out << origin_;
    // Report the nearest located ancestor.
    std::string p = ptr;
    while (true) {
      auto it = lines_.find(p);
      if (it != lines_.end()) {
        out << ":" << it->second;
        break;
      }
      const auto cut = p.find_last_of('/');
      if (cut == std::string::npos || p.empty()) break;
      p = p.substr(0, cut);
    }
    out << ": " << (ptr.empty() ? "/" : ptr) << ": " << msg;
    fail(ErrorCode::kSchema, out.str());
  }

  void allow_keys(const json& obj, const std::string& ptr,
                  std::initializer_list<const char*> keys) const {
    if (!obj.is_object()) error(ptr, "expected an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      const bool known = std::any_of(keys.begin(), keys.end(),
                                     [&](const char* k) { return it.key() == k; });
      if (!known) error(ptr + "/" + it.key(), "unknown key");
    }
  }

  const json* find(const json& obj, const char* key) const {
    auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
  }

  const json& require(const json& obj, const std::string& ptr, const char* key) const {
    const json* v = find(obj, key);
    if (v == nullptr) error(ptr, std::string("missing required key \"") + key + "\"");
    return *v;
  }

  double number(const json& v, const std::string& ptr) const {
    if (!v.is_number()) error(ptr, "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) error(ptr, "expected a finite number");
    return x;
  }

  double positive(const json& v, const std::string& ptr) const {
    const double x = number(v, ptr);
    if (!(x > 0.0)) error(ptr, "expected a positive number");
    return x;
  }

  int integer(const json& v, const std::string& ptr, int lo, int hi) const {
    if (!v.is_number_integer()) error(ptr, "expected an integer");
    const auto x = v.get<long long>();
    if (x < lo || x > hi) {
      error(ptr, "expected an integer in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    return static_cast<int>(x);
  }

  bool boolean(const json& v, const std::string& ptr) const {
    if (!v.is_boolean()) error(ptr, "expected true or false");
    return v.get<bool>();
  }

  std::string string(const json& v, const std::string& ptr) const {
    if (!v.is_string()) error(ptr, "expected a string");
    return v.get<std::string>();
  }

  std::vector<double> numbers(const json& v, const std::string& ptr) const {
    if (!v.is_array()) error(ptr, "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(number(v[i], ptr + "/" + std::to_string(i)));
    return out;
  }

  // Row-major matrix given flat or as an array of rows.
  Matrix matrix(const json& v, const std::string& ptr, int rows, int cols) const {
    if (!v.is_array()) error(ptr, "expected a row-major array");
    Matrix M(rows, cols);
    if (!v.empty() && v[0].is_array()) {
      if (static_cast<int>(v.size()) != rows) {
        error(ptr, "expected " + std::to_string(rows) + " rows, got " + std::to_string(v.size()));
      }
      for (int i = 0; i < rows; ++i) {
        const std::string rp = ptr + "/" + std::to_string(i);
        const std::vector<double> row = numbers(v[i], rp);
        if (static_cast<int>(row.size()) != cols) {
          error(rp, "expected " + std::to_string(cols) + " entries, got " + std::to_string(row.size()));
        }
        for (int j = 0; j < cols; ++j) M(i, j) = row[j];
      }
      return M;
    }
    const std::vector<double> flat = numbers(v, ptr);
    if (static_cast<int>(flat.size()) != rows * cols) {
      error(ptr, "expected " + std::to_string(rows * cols) + " entries (" + std::to_string(rows) +
                     " x " + std::to_string(cols) + "), got " + std::to_string(flat.size()));
    }
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) M(i, j) = flat[i * cols + j];
    }
    return M;
  }

 private:
  std::string origin_;
  std::map<std::string, int> lines_;
};

void read_switching(const Reader& r, const json& obj, const std::string& ptr, SwitchOptions& sw) {
  r.allow_keys(obj, ptr, {"scan_intervals", "zero_scan_tol", "time_tol", "limit_offset",
                          "switch_tol", "order_tol", "window_slack"});
  if (auto* v = r.find(obj, "scan_intervals")) sw.scan_intervals = r.integer(*v, ptr + "/scan_intervals", 16, 1 << 22);
  if (auto* v = r.find(obj, "zero_scan_tol")) sw.zero_scan_tol = r.positive(*v, ptr + "/zero_scan_tol");
  if (auto* v = r.find(obj, "time_tol")) sw.time_tol = r.positive(*v, ptr + "/time_tol");
  if (auto* v = r.find(obj, "limit_offset")) sw.limit_offset = r.positive(*v, ptr + "/limit_offset");
  if (auto* v = r.find(obj, "switch_tol")) sw.switch_tol = r.positive(*v, ptr + "/switch_tol");
  if (auto* v = r.find(obj, "order_tol")) sw.order_tol = r.positive(*v, ptr + "/order_tol");
  if (auto* v = r.find(obj, "window_slack")) sw.window_slack = r.number(*v, ptr + "/window_slack");
}

void read_solver(const Reader& r, const json& obj, const std::string& ptr, SteeringOptions& s) {
  r.allow_keys(obj, ptr,
               {"grid_intervals", "smoothing", "rel_decrease_tol", "grad_tol",
                "max_newton_iterations", "residual_tol", "feasibility_tol", "rank_tol",
                "bisection_tol", "guard_band", "initial_horizon", "max_horizon",
                "max_bisection_evaluations", "refine_grid_check", "init_seed", "switching"});
  if (auto* v = r.find(obj, "grid_intervals")) s.grid_intervals = r.integer(*v, ptr + "/grid_intervals", 16, 1 << 20);
  if (auto* v = r.find(obj, "smoothing")) {
    s.smoothing = r.numbers(*v, ptr + "/smoothing");
    if (s.smoothing.empty()) r.error(ptr + "/smoothing", "expected at least one level");
    for (std::size_t i = 0; i < s.smoothing.size(); ++i) {
      if (!(s.smoothing[i] >= 0.0)) r.error(ptr + "/smoothing/" + std::to_string(i), "expected a nonnegative level");
    }
  }
  if (auto* v = r.find(obj, "rel_decrease_tol")) s.rel_decrease_tol = r.positive(*v, ptr + "/rel_decrease_tol");
  if (auto* v = r.find(obj, "grad_tol")) s.grad_tol = r.positive(*v, ptr + "/grad_tol");
  if (auto* v = r.find(obj, "max_newton_iterations")) s.max_newton_iterations = r.integer(*v, ptr + "/max_newton_iterations", 1, 100000);
  if (auto* v = r.find(obj, "residual_tol")) s.residual_tol = r.positive(*v, ptr + "/residual_tol");
  if (auto* v = r.find(obj, "feasibility_tol")) s.feasibility_tol = r.positive(*v, ptr + "/feasibility_tol");
  if (auto* v = r.find(obj, "rank_tol")) s.rank_tol = r.positive(*v, ptr + "/rank_tol");
  if (auto* v = r.find(obj, "bisection_tol")) s.bisection_tol = r.positive(*v, ptr + "/bisection_tol");
  if (auto* v = r.find(obj, "guard_band")) s.guard_band = r.positive(*v, ptr + "/guard_band");
  if (auto* v = r.find(obj, "initial_horizon")) s.initial_horizon = r.positive(*v, ptr + "/initial_horizon");
  if (auto* v = r.find(obj, "max_horizon")) s.max_horizon = r.positive(*v, ptr + "/max_horizon");
  if (auto* v = r.find(obj, "max_bisection_evaluations")) s.max_bisection_evaluations = r.integer(*v, ptr + "/max_bisection_evaluations", 4, 100000);
  if (auto* v = r.find(obj, "refine_grid_check")) s.refine_grid_check = r.boolean(*v, ptr + "/refine_grid_check");
  if (auto* v = r.find(obj, "init_seed")) {
    if (!v->is_number_unsigned()) r.error(ptr + "/init_seed", "expected a nonnegative integer");
    s.init_seed = v->get<std::uint64_t>();
  }
  if (auto* v = r.find(obj, "switching")) read_switching(r, *v, ptr + "/switching", s.switching);
  if (!(s.max_horizon > s.initial_horizon)) r.error(ptr + "/max_horizon", "must exceed initial_horizon");
}

void read_tolerances(const Reader& r, const json& obj, const std::string& ptr, Scenario& sc) {
  r.allow_keys(obj, ptr, {"bang_bang_low", "bang_bang_high", "reversal", "residual", "oracle_time",
                          "oracle_switch", "oracle_residual", "minimality_factor", "k_refinement"});
  SteeringOptions& s = sc.solver;
  VerificationTolerances& t = sc.tolerances;
  if (auto* v = r.find(obj, "bang_bang_low")) s.bang_bang_low_tol = r.positive(*v, ptr + "/bang_bang_low");
  if (auto* v = r.find(obj, "bang_bang_high")) s.bang_bang_high_tol = r.positive(*v, ptr + "/bang_bang_high");
  if (auto* v = r.find(obj, "reversal")) s.reversal_tol = r.positive(*v, ptr + "/reversal");
  if (auto* v = r.find(obj, "residual")) s.residual_tol = r.positive(*v, ptr + "/residual");
  if (auto* v = r.find(obj, "oracle_time")) t.oracle_time = r.positive(*v, ptr + "/oracle_time");
  if (auto* v = r.find(obj, "oracle_switch")) t.oracle_switch = r.positive(*v, ptr + "/oracle_switch");
  if (auto* v = r.find(obj, "oracle_residual")) t.oracle_residual = r.positive(*v, ptr + "/oracle_residual");
  if (auto* v = r.find(obj, "minimality_factor")) {
    t.minimality_factor = r.positive(*v, ptr + "/minimality_factor");
    if (t.minimality_factor >= 1.0) r.error(ptr + "/minimality_factor", "expected a value below 1");
  }
  if (auto* v = r.find(obj, "k_refinement")) t.k_refinement = r.positive(*v, ptr + "/k_refinement");
}

Matrix read_y0(const Reader& r, const json& obj, const std::string& ptr, int modes, int n) {
  if (!obj.is_object()) r.error(ptr, "expected an object");
  Matrix y0 = Matrix::Zero(modes, n);
  if (obj.contains("preset")) {
    r.allow_keys(obj, ptr, {"preset", "eta_norm", "eta_direction", "mode"});
    const std::string preset = r.string(obj["preset"], ptr + "/preset");
    if (preset != "example4") r.error(ptr + "/preset", "unknown preset \"" + preset + "\"");
    if (n != 2) r.error(ptr + "/preset", "preset example4 needs n = 2");
    const double norm = r.positive(r.require(obj, ptr, "eta_norm"), ptr + "/eta_norm");
    Vector dir(2);
    dir << 1.0, 1.0;
    if (auto* v = r.find(obj, "eta_direction")) {
      const std::vector<double> d = r.numbers(*v, ptr + "/eta_direction");
      if (d.size() != 2) r.error(ptr + "/eta_direction", "expected 2 entries");
      dir << d[0], d[1];
    }
    if (dir.norm() == 0.0) r.error(ptr + "/eta_direction", "direction must be nonzero");
    int mode = 1;
    if (auto* v = r.find(obj, "mode")) mode = r.integer(*v, ptr + "/mode", 1, modes);
    y0.row(mode - 1) = (norm / dir.norm()) * dir.transpose();
    return y0;
  }
  r.allow_keys(obj, ptr, {"modes"});
  const json& table = r.require(obj, ptr, "modes");
  const std::string tp = ptr + "/modes";
  if (!table.is_object() || table.empty()) r.error(tp, "expected a non-empty object {\"mode\": [values]}");
  for (auto it = table.begin(); it != table.end(); ++it) {
    const std::string ep = tp + "/" + it.key();
    int mode = 0;
    try {
      std::size_t used = 0;
      mode = std::stoi(it.key(), &used);
      if (used != it.key().size()) mode = 0;
    } catch (const std::exception&) {
      mode = 0;
    }
    if (mode < 1 || mode > modes) {
      r.error(ep, "mode index must be an integer in [1, " + std::to_string(modes) + "]");
    }
    const std::vector<double> v = r.numbers(it.value(), ep);
    if (static_cast<int>(v.size()) != n) r.error(ep, "expected " + std::to_string(n) + " entries");
    for (int j = 0; j < n; ++j) y0(mode - 1, j) = v[j];
  }
  return y0;
}

json number_or_inf(double x) {
  if (std::isfinite(x)) return x;
  if (std::isnan(x)) return nullptr;
  return x > 0 ? "+inf" : "-inf";
}

json matrix_json(const Matrix& M) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(number_or_inf(M(i, j)));
    rows.push_back(row);
  }
  return rows;
}

json vector_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(number_or_inf(v(i)));
  return out;
}

std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class Stopwatch {
 public:
  double lap() {
    const auto now = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    return s;
  }

 private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

bool enabled(const Scenario& sc, const std::string& check) {
  return std::find(sc.checks.begin(), sc.checks.end(), check) != sc.checks.end();
}

json check_entry(bool pass, double residual, double tolerance) {
  return json{{"enabled", true},
              {"pass", pass},
              {"residual", number_or_inf(residual)},
              {"tolerance", number_or_inf(tolerance)}};
}

json switch_table(const SwitchReport& rep) {
  json zeros = json::array();
  for (const ZeroPoint& z : rep.zeros) {
    json e{{"time", z.time}, {"classified", z.classified}};
    if (z.classified) {
      e["is_switch"] = z.is_switch;
      e["order"] = z.order;
      e["order_fit"] = z.order_fit;
      e["fit_slope"] = number_or_inf(z.fit_slope);
      e["orders_agree"] = z.orders_agree;
      e["reversal_residual"] = number_or_inf(z.reversal_residual);
      e["stencil_gap"] = number_or_inf(z.stencil_gap);
      e["left_dir"] = matrix_json(z.left_dir);
      e["right_dir"] = matrix_json(z.right_dir);
    }
    zeros.push_back(e);
  }
  return json{{"zero_count", rep.zero_times.size()},
              {"count", rep.switch_times().size()},
              {"switch_times", rep.switch_times()},
              {"zeros", zeros},
              {"unclassified", rep.unclassified},
              {"max_window_count", rep.max_window_count}};
}

// Oracle cross-check applies to single-mode data with omega = Omega and n <= 3.
std::string oracle_inapplicable(const Scenario& sc, const ControlPair& pair, int* mode) {
  const SpectralDomain dom = build_domain(sc.length, sc.omega, sc.modes);
  if (!dom.full_control_region()) return "control region is not the whole interval";
  if (pair.n() > 3) return "oracle supports n <= 3";
  int found = -1;
  for (int k = 0; k < sc.modes; ++k) {
    if (sc.y0.row(k).squaredNorm() == 0.0) continue;
    if (found >= 0) return "initial state spans several modes";
    found = k;
  }
  if (kalman_rank(pair, sc.solver.rank_tol) != pair.n()) return "pair violates the Kalman rank condition";
  *mode = found;
  return "";
}

bool is_rotation_example(const ControlPair& pair) {
  const ControlPair ref = rotation_example_pair();
  return pair.n() == 2 && pair.m() == 1 && (pair.A() - ref.A()).norm() == 0.0 &&
         (pair.B() - ref.B()).norm() == 0.0;
}

}  // namespace

std::string version_string() { return TOCP_VERSION; }

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kSchema:
      return 2;
    case ErrorCode::kFeasibility:
    case ErrorCode::kHorizon:
      return 3;
    case ErrorCode::kIo:
      return 5;
    default:
      return 4;
  }
}

Scenario parse_scenario(const std::string& text, const std::string& origin) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    int line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    fail(ErrorCode::kSchema, origin + ":" + std::to_string(line) + ":" + std::to_string(col) +
                                 ": invalid JSON: " + e.what());
  }
  const Reader r(origin, locate_lines(text));
  r.allow_keys(root, "", {"schema", "name", "n", "m", "A", "B", "domain", "y0", "solver",
                          "tolerances", "checks", "oracle", "output"});
  const std::string schema = r.string(r.require(root, "", "schema"), "/schema");
  if (schema != kScenarioSchema) {
    r.error("/schema", "unsupported schema \"" + schema + "\" (expected " + kScenarioSchema + ")");
  }
  Scenario sc;
  sc.source = root;
  sc.name = r.string(r.require(root, "", "name"), "/name");
  static const std::regex name_re("[A-Za-z0-9_.-]+");
  if (!std::regex_match(sc.name, name_re) || sc.name == "." || sc.name == "..") {
    r.error("/name", "names may only use letters, digits, '_', '-' and '.'");
  }
  const int n = r.integer(r.require(root, "", "n"), "/n", 1, 8);
  const int m = r.integer(r.require(root, "", "m"), "/m", 1, 8);
  sc.A = r.matrix(r.require(root, "", "A"), "/A", n, n);
  sc.B = r.matrix(r.require(root, "", "B"), "/B", n, m);
  if (sc.B.norm() == 0.0) r.error("/B", "input matrix must have a nonzero entry");

  sc.length = std::numbers::pi;
  sc.omega = {0.0, sc.length};
  bool omega_given = false;
  if (auto* d = r.find(root, "domain")) {
    r.allow_keys(*d, "/domain", {"length", "omega", "modes"});
    if (auto* v = r.find(*d, "length")) sc.length = r.positive(*v, "/domain/length");
    if (auto* v = r.find(*d, "modes")) sc.modes = r.integer(*v, "/domain/modes", 1, 512);
    if (auto* v = r.find(*d, "omega")) {
      const std::vector<double> w = r.numbers(*v, "/domain/omega");
      if (w.size() != 2) r.error("/domain/omega", "expected [a, b]");
      sc.omega = {w[0], w[1]};
      omega_given = true;
    }
  }
  if (!omega_given) sc.omega = {0.0, sc.length};
  if (!(sc.omega.a >= 0.0 && sc.omega.a < sc.omega.b && sc.omega.b <= sc.length)) {
    r.error("/domain/omega", "need 0 <= a < b <= length");
  }

  sc.y0 = read_y0(r, r.require(root, "", "y0"), "/y0", sc.modes, n);
  if (sc.y0.norm() == 0.0) r.error("/y0", "initial state must be nonzero");

  if (auto* v = r.find(root, "solver")) read_solver(r, *v, "/solver", sc.solver);
  if (auto* v = r.find(root, "tolerances")) read_tolerances(r, *v, "/tolerances", sc);

  sc.checks = {"bang_bang", "count_bound", "reversal", "parity", "residual"};
  if (auto* v = r.find(root, "checks")) {
    if (!v->is_array()) r.error("/checks", "expected an array of check names");
    sc.checks.clear();
    for (std::size_t i = 0; i < v->size(); ++i) {
      const std::string p = "/checks/" + std::to_string(i);
      const std::string c = r.string((*v)[i], p);
      const auto& known = known_checks();
      if (std::find(known.begin(), known.end(), c) == known.end()) r.error(p, "unknown check \"" + c + "\"");
      if (std::find(sc.checks.begin(), sc.checks.end(), c) == sc.checks.end()) sc.checks.push_back(c);
    }
  }
  if (auto* v = r.find(root, "oracle")) sc.oracle = r.boolean(*v, "/oracle");
  if (auto* v = r.find(root, "output")) {
    r.allow_keys(*v, "/output", {"trajectory_rows"});
    if (auto* t = r.find(*v, "trajectory_rows")) sc.trajectory_rows = r.integer(*t, "/output/trajectory_rows", 2, 1 << 22);
  }
  return sc;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) fail(ErrorCode::kIo, "error while reading " + path.string());
  return parse_scenario(buf.str(), path.string());
}

RunReport run_scenario(const Scenario& sc, const RunOptions& opts) {
  RunReport run;
  run.name = sc.name;
  json& rep = run.report;
  Stopwatch total;
  Stopwatch clock;
  json timings = json::object();
  rep["schema"] = kReportSchema;
  rep["tool_version"] = version_string();
  rep["scenario"] = sc.source;

  auto finish = [&](int code, const std::string& outcome, const std::string& message) {
    run.exit_code = code;
    run.message = message;
    rep["status"] = json{{"exit_code", code}, {"outcome", outcome}, {"message", message}};
    timings["total"] = total.lap();
    rep["run_info"] = json{{"generated_at", utc_timestamp()}, {"timings", timings}};
    return run;
  };

  const ControlPair pair(sc.A, sc.B);
  const SpectralDomain dom = build_domain(sc.length, sc.omega, sc.modes);
  const SpectralVector y0(sc.y0);
  const SteeringOptions& so = sc.solver;
  const double y0_norm = y0.norm();

  const KalmanDecomposition dec = kalman_decompose(pair, so.rank_tol);
  const DecompositionResiduals res = check_decomposition(dec, pair, so.rank_tol);
  const ExtendedReal dA = compute_dA(pair);
  const int qAB = compute_qAB(pair, so.rank_tol);
  rep["structure"] = json{
      {"n", pair.n()},
      {"m", pair.m()},
      {"kalman_rank", kalman_rank(pair, so.rank_tol)},
      {"k", dec.k},
      {"dA", dA.is_finite() ? json(dA.value()) : json("+inf")},
      {"qAB", qAB},
      {"decomposition",
       {{"orthogonality", res.orthogonality},
        {"block_form_A", res.block_form_A},
        {"block_form_B", res.block_form_B},
        {"reconstruction", res.reconstruction},
        {"reduced_kalman_rank", res.reduced_kalman_rank}}}};
  rep["domain"] = json{{"length", sc.length},
                       {"omega", {sc.omega.a, sc.omega.b}},
                       {"modes", sc.modes},
                       {"full_control_region", dom.full_control_region()}};

  const FeasibilityResult feas = feasibility_check(pair, y0, so.feasibility_tol, so.rank_tol);
  rep["feasibility"] = json{{"feasible", feas.feasible},
                            {"residual", feas.residual},
                            {"relative_residual", feas.residual / y0_norm},
                            {"tolerance", so.feasibility_tol},
                            {"controllable_dim", feas.controllable_dim}};
  timings["structure"] = clock.lap();
  if (!feas.feasible) {
    return finish(3, "infeasible",
                  "initial state is not in the controllable subspace (residual " +
                      fmt17(feas.residual) + ")");
  }

  OptimalTimeResult ot;
  try {
    ot = optimal_time(dom, pair, y0, so);
  } catch (const Error& e) {
    timings["optimal_time"] = clock.lap();
    const int code = exit_code_for(e.code());
    const std::string outcome = code == 3 ? (e.code() == ErrorCode::kHorizon ? "horizon" : "infeasible")
                                          : "solver_failure";
    rep["error"] = json{{"code", to_string(e.code())}, {"message", e.what()}};
    return finish(code, outcome, e.what());
  }
  timings["optimal_time"] = clock.lap();

  json curve = json::array();
  std::vector<NormSample> samples = ot.evaluations;
  std::sort(samples.begin(), samples.end(),
            [](const NormSample& a, const NormSample& b) { return a.horizon < b.horizon; });
  std::ostringstream ncsv;
  ncsv << "T,N\n";
  double last = -1.0;
  for (const NormSample& s : samples) {
    if (s.horizon == last) continue;
    last = s.horizon;
    curve.push_back(json{{"T", s.horizon}, {"N", s.norm}});
    ncsv << fmt17(s.horizon) << ',' << fmt17(s.norm) << '\n';
  }
  run.ncurve_csv = ncsv.str();
  rep["min_norm_curve"] = curve;

  rep["optimal_time"] = json{{"t_star", ot.t_star},
                             {"t_low", ot.t_low},
                             {"t_high", ot.t_high},
                             {"n_at_t_star", ot.n_at_t_star},
                             {"guard_band", so.guard_band},
                             {"guard_band_warning", ot.guard_band_warning},
                             {"grid_refinement_delta", ot.grid_refinement_delta},
                             {"evaluations", ot.evaluations.size()}};
  rep["steering"] = json{{"xi", matrix_json(ot.steering.xi.coeffs())},
                         {"min_norm", ot.steering.min_norm},
                         {"dual_value", ot.steering.dual_value},
                         {"terminal_residual", ot.steering.terminal_residual},
                         {"relative_residual", ot.steering.terminal_residual / y0_norm},
                         {"newton_iterations", ot.steering.newton_iterations},
                         {"gradient_norm", ot.steering.gradient_norm},
                         {"converged", ot.steering.converged}};

  json sw = switch_table(ot.switches);
  sw["window"] = dA.is_finite() ? json(dA.min_with(ot.t_star)) : json("+inf");
  sw["allowed_per_window"] = ot.bounds.allowed_per_window;
  sw["allowed_total"] = ot.bounds.allowed_total;
  // Largest direction change between adjacent output samples not separated by a zero.
  const ObservationMap obs(dom, pair, ot.steering.xi, ot.t_star);
  double reference = 0.0;
  for (int i = 0; i <= so.grid_intervals; ++i) {
    reference = std::max(reference, obs.norm(ot.t_star * i / so.grid_intervals));
  }
  const int rows = sc.trajectory_rows;
  std::ostringstream tcsv;
  tcsv << "t,norm_u";
  for (int k = 1; k <= sc.modes; ++k) {
    for (int j = 1; j <= pair.m(); ++j) tcsv << ",u_" << k << '_' << j;
  }
  tcsv << '\n';
  Matrix prev;
  double prev_t = 0.0;
  double max_change = 0.0;
  const std::vector<double> zeros = ot.switches.zero_times;
  for (int i = 0; i < rows; ++i) {
    const double t = (i == rows - 1) ? ot.t_star : ot.t_star * i / (rows - 1);
    const Matrix u = control_direction(obs, t, reference, so.switching);
    tcsv << fmt17(t) << ',' << fmt17(u.norm());
    for (int k = 0; k < sc.modes; ++k) {
      for (int j = 0; j < pair.m(); ++j) tcsv << ',' << fmt17(u(k, j));
    }
    tcsv << '\n';
    if (i > 0) {
      const bool crosses = std::any_of(zeros.begin(), zeros.end(),
                                       [&](double z) { return z > prev_t && z <= t; });
      if (!crosses) max_change = std::max(max_change, (u - prev).norm());
    }
    prev = u;
    prev_t = t;
  }
  run.trajectory_csv = tcsv.str();
  sw["max_adjacent_change"] = max_change;
  rep["switches"] = sw;

  json checks = json::object();
  bool all_pass = true;
  auto record = [&](const std::string& name, bool pass, double residual, double tol) {
    checks[name] = check_entry(pass, residual, tol);
    all_pass = all_pass && pass;
  };
  const VerificationFlags& fl = ot.flags;
  if (enabled(sc, "bang_bang")) record("bang_bang", fl.bang_bang, fl.bang_bang_worst, so.bang_bang_low_tol);
  if (enabled(sc, "count_bound")) {
    const double excess = std::max(ot.bounds.max_window_count - ot.bounds.allowed_per_window,
                                   ot.bounds.zero_count - ot.bounds.allowed_total);
    record("count_bound", fl.count_bound, excess, 0.0);
  }
  if (enabled(sc, "reversal")) record("reversal", fl.reversal, fl.reversal_worst, so.reversal_tol);
  if (enabled(sc, "parity")) {
    int violations = static_cast<int>(ot.switches.unclassified.size());
    for (const ZeroPoint& z : ot.switches.zeros) {
      if (!z.classified) continue;
      const int want = z.is_switch ? 1 : 0;
      if (!z.orders_agree || z.order % 2 != want) ++violations;
    }
    record("parity", fl.parity, violations, 0.0);
  }
  if (enabled(sc, "residual")) {
    record("residual", fl.residual, ot.steering.terminal_residual / y0_norm, so.residual_tol);
  }

  const bool want_oracle = opts.oracle || sc.oracle || enabled(sc, "oracle_agreement") ||
                           enabled(sc, "oracle_residual") || enabled(sc, "minimality");
  if (want_oracle) {
    int mode = -1;
    const std::string why = oracle_inapplicable(sc, pair, &mode);
    json oj;
    if (!why.empty()) {
      oj = json{{"applicable", false}, {"reason", why}};
      for (const char* c : {"oracle_agreement", "oracle_residual", "minimality"}) {
        checks[c] = json{{"enabled", true}, {"skipped", true}, {"reason", why}};
      }
    } else {
      const VerificationTolerances& vt = sc.tolerances;
      const OdeInstance inst = reduce_to_mode(pair, dom.lambda(mode), sc.y0.row(mode).transpose());
      try {
        const OdeSolution os = ode_time_optimal(inst);
        const double rel_t = std::abs(os.t_star - ot.t_star) / os.t_star;
        double sw_dev = 0.0;
        const bool same_count = os.switch_times.size() == zeros.size();
        if (same_count) {
          for (std::size_t i = 0; i < zeros.size(); ++i) {
            sw_dev = std::max(sw_dev, std::abs(os.switch_times[i] - zeros[i]));
          }
        } else {
          sw_dev = std::numeric_limits<double>::infinity();
        }
        const double probe_T = vt.minimality_factor * os.t_star;
        const double probe_N = ode_min_norm(inst, probe_T);
        const double res_scale = std::max(1.0, inst.y0.norm());
        oj = json{{"applicable", true},
                  {"mode", mode + 1},
                  {"t_star", os.t_star},
                  {"relative_time_difference", rel_t},
                  {"adjoint_dir", vector_json(os.adjoint_dir)},
                  {"switch_times", os.switch_times},
                  {"max_switch_deviation", number_or_inf(sw_dev)},
                  {"residual", os.residual},
                  {"minimality_probe", {{"T", probe_T}, {"N", probe_N}}}};
        if (!os.tied_adjoint_dirs.empty()) {
          json tied = json::array();
          for (const Vector& v : os.tied_adjoint_dirs) tied.push_back(vector_json(v));
          oj["tied_adjoint_dirs"] = tied;
        }
        if (is_rotation_example(pair)) {
          const ClosedFormPhase ph = closed_form_phase(os.adjoint_dir, os.t_star);
          oj["closed_form"] = json{{"theta", ph.theta}, {"rho", ph.rho}, {"lattice", ph.lattice}};
        }
        if (opts.oracle || sc.oracle || enabled(sc, "oracle_agreement")) {
          const bool pass = rel_t <= vt.oracle_time && sw_dev <= vt.oracle_switch * ot.t_star;
          record("oracle_agreement", pass, std::max(rel_t / vt.oracle_time, sw_dev / (vt.oracle_switch * ot.t_star)), 1.0);
        }
        if (opts.oracle || sc.oracle || enabled(sc, "oracle_residual")) {
          record("oracle_residual", os.residual <= vt.oracle_residual * res_scale, os.residual / res_scale,
                 vt.oracle_residual);
        }
        if (opts.oracle || sc.oracle || enabled(sc, "minimality")) {
          record("minimality", probe_N > 1.0, probe_N, 1.0);
        }
      } catch (const Error& e) {
        oj = json{{"applicable", true}, {"error", e.what()}};
        for (const char* c : {"oracle_agreement", "oracle_residual", "minimality"}) {
          record(c, false, std::numeric_limits<double>::infinity(), 0.0);
        }
      }
    }
    rep["oracle"] = oj;
    timings["oracle"] = clock.lap();
  }

  if (opts.refine_k || enabled(sc, "k_refinement")) {
    const int K2 = 2 * sc.modes;
    const SpectralDomain dom2 = build_domain(sc.length, sc.omega, K2);
    Matrix y2 = Matrix::Zero(K2, pair.n());
    y2.topRows(sc.modes) = sc.y0;
    json kj{{"modes", K2}};
    try {
      const OptimalTimeResult ot2 = optimal_time(dom2, pair, SpectralVector(y2), so);
      const double rel = std::abs(ot2.t_star - ot.t_star) / ot.t_star;
      kj["t_star"] = ot2.t_star;
      kj["relative_delta"] = rel;
      record("k_refinement", rel <= sc.tolerances.k_refinement, rel, sc.tolerances.k_refinement);
    } catch (const Error& e) {
      kj["error"] = e.what();
      record("k_refinement", false, std::numeric_limits<double>::infinity(), sc.tolerances.k_refinement);
    }
    rep["k_refinement"] = kj;
    timings["k_refinement"] = clock.lap();
  }
  rep["checks"] = checks;

  if (ot.guard_band_warning) {
    rep["warnings"] = json::array({"|N(T*) - 1| exceeds the guard band"});
  }
  if (!all_pass) {
    std::string failed;
    for (auto it = checks.begin(); it != checks.end(); ++it) {
      if (it.value().contains("pass") && !it.value()["pass"].get<bool>()) {
        failed += (failed.empty() ? "" : ", ") + it.key();
      }
    }
    return finish(1, "verification_failed", "failed checks: " + failed);
  }
  return finish(0, "verified", "");
}

std::string report_text(const RunReport& run) {
  json copy = run.report;
  copy.erase("run_info");
  return copy.dump(2) + "\n";
}

std::vector<std::filesystem::path> emit_report(const RunReport& run,
                                               const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) fail(ErrorCode::kIo, "cannot create " + out_dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  auto write = [&](const std::string& suffix, const std::string& body) {
    const std::filesystem::path p = out_dir / (run.name + suffix);
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::kIo, "cannot write " + p.string());
    out << body;
    out.flush();
    if (!out) fail(ErrorCode::kIo, "error while writing " + p.string());
    written.push_back(p);
  };
  write(".report.json", run.report.dump(2) + "\n");
  if (!run.trajectory_csv.empty()) write(".trajectory.csv", run.trajectory_csv);
  if (!run.ncurve_csv.empty()) write(".ncurve.csv", run.ncurve_csv);
  return written;
}

}  // namespace tocp
