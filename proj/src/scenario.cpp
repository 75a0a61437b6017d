#include "stmpc/scenario.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>

namespace stmpc {

ScenarioError::ScenarioError(const std::string& msg, std::string source, int line, int column)
    : std::runtime_error(line > 0 ? source + ":" + std::to_string(line) + ":" + std::to_string(column) + ": " + msg
                                  : source + ": " + msg),
      source_(std::move(source)),
      line_(line),
      column_(column) {}

const std::vector<std::string>& known_scenario_keys() {
  static const std::vector<std::string> keys = {
      "scenario.name",
      "plant.kind", "plant.m", "plant.M", "plant.l", "plant.gravity", "plant.u_max", "plant.v_bar", "plant.w_bar",
      "plant.K_u", "plant.L_phi", "plant.L_G",
      "cost.Q", "cost.R", "cost.P_f", "cost.rho", "cost.L_F", "cost.L_Vf",
      "terminal.eps", "terminal.eps_f", "terminal.law", "terminal.K", "terminal.gain_v", "terminal.gain_w",
      "terminal.gain_h", "terminal.margin",
      "trigger.sigma", "trigger.N", "trigger.tau_d_bar", "trigger.search_step", "trigger.root_tol",
      "trigger.selection",
      "dual.mode", "dual.delta_l",
      "solver.segments", "solver.max_outer", "solver.max_inner", "solver.penalty_init", "solver.penalty_growth",
      "solver.penalty_max", "solver.grad_tol", "solver.con_tol",
      "sim.x0", "sim.T_p", "sim.horizon", "sim.truth_step", "sim.predict_step", "sim.delay", "sim.w_max",
      "sim.seed", "sim.max_events",
      "bounds.lipschitz", "bounds.L_J", "bounds.probes", "bounds.safety",
  };
  return keys;
}

namespace {

bool is_known(const std::string& key) {
  const auto& k = known_scenario_keys();
  return std::find(k.begin(), k.end(), key) != k.end();
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

ScenarioEntries read_scenario_entries(const std::string& text, const std::string& source) {
  ScenarioEntries out;
  out.source = source;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = hash == std::string::npos ? raw : raw.substr(0, hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const int indent = static_cast<int>(line.find_first_not_of(" \t")) + 1;
    if (body.front() == '[') {
      if (body.back() != ']' || body.size() < 3)
        throw ScenarioError("malformed section header", source, line_no, indent);
      section = trim(body.substr(1, body.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ScenarioError("expected 'key = value'", source, line_no, indent);
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ScenarioError("missing key before '='", source, line_no, indent);
    const std::string full = key.find('.') != std::string::npos || section.empty() ? key : section + "." + key;
    if (!is_known(full)) throw ScenarioError("unknown key '" + full + "'", source, line_no, indent);
    const std::string value = trim(line.substr(eq + 1));
    const auto vpos = line.find_first_not_of(" \t", eq + 1);
    const int vcol = vpos == std::string::npos ? static_cast<int>(eq) + 2 : static_cast<int>(vpos) + 1;
    if (value.empty()) throw ScenarioError("missing value for '" + full + "'", source, line_no, vcol);
    if (out.values.count(full)) throw ScenarioError("duplicate key '" + full + "'", source, line_no, indent);
    out.values[full] = {value, line_no, vcol};
  }
  return out;
}

void apply_override(ScenarioEntries& entries, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ScenarioError("override must be KEY=VALUE: '" + assignment + "'", "--override", 0, 0);
  const std::string key = trim(assignment.substr(0, eq));
  const std::string value = trim(assignment.substr(eq + 1));
  if (!is_known(key)) throw ScenarioError("unknown key '" + key + "'", "--override", 0, 0);
  if (value.empty()) throw ScenarioError("missing value for '" + key + "'", "--override", 0, 0);
  entries.values[key] = {value, 0, 0};
}

namespace {

class Reader {
 public:
  explicit Reader(const ScenarioEntries& e) : e_(e) {}

  bool has(const std::string& key) const { return e_.values.count(key) > 0; }

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    const auto it = e_.values.find(key);
    if (it == e_.values.end()) throw ScenarioError(msg, e_.source, 0, 0);
    const auto& entry = it->second;
    throw ScenarioError(msg, entry.line > 0 ? e_.source : "--override " + key, entry.line, entry.column);
  }

  const std::string& raw(const std::string& key) const {
    const auto it = e_.values.find(key);
    if (it == e_.values.end()) throw ScenarioError("missing required key '" + key + "'", e_.source, 0, 0);
    return it->second.value;
  }

  double number(const std::string& key) const { return parse_number(key, raw(key)); }
  double number(const std::string& key, double fallback) const { return has(key) ? number(key) : fallback; }

  long integer(const std::string& key, long fallback) const {
    if (!has(key)) return fallback;
    const double v = number(key);
    if (v != std::floor(v) || std::abs(v) > 9e15) fail(key, "'" + key + "' must be an integer");
    return static_cast<long>(v);
  }

  std::string word(const std::string& key, const std::string& fallback) const { return has(key) ? raw(key) : fallback; }

  Vec vector(const std::string& key) const {
    const Mat m = matrix(key);
    if (m.rows() != 1 && m.cols() != 1) fail(key, "'" + key + "' must be a vector");
    return Eigen::Map<const Vec>(m.data(), m.size());
  }

  Mat matrix(const std::string& key) const {
    std::string s = raw(key);
    if (s.rfind("diag(", 0) == 0) {
      if (s.back() != ')') fail(key, "unterminated diag(...)");
      const Vec d = row_values(key, s.substr(5, s.size() - 6));
      return d.asDiagonal();
    }
    if (!s.empty() && s.front() == '[') {
      if (s.back() != ']') fail(key, "unterminated '['");
      s = s.substr(1, s.size() - 2);
    }
    std::vector<Vec> rows;
    std::stringstream ss(s);
    std::string row;
    while (std::getline(ss, row, ';')) {
      if (trim(row).empty()) continue;
      rows.push_back(row_values(key, row));
    }
    if (rows.empty()) fail(key, "'" + key + "' is empty");
    Mat out(static_cast<Eigen::Index>(rows.size()), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != out.cols()) fail(key, "rows of '" + key + "' have different lengths");
      out.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
    }
    return out;
  }

 private:
  Vec row_values(const std::string& key, const std::string& row) const {
    std::string cleaned = row;
    std::replace(cleaned.begin(), cleaned.end(), ',', ' ');
    std::istringstream in(cleaned);
    std::vector<double> v;
    std::string tok;
    while (in >> tok) v.push_back(parse_number(key, tok));
    return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
  }

  // A number, or pi, optionally signed and optionally scaled by "*c" or "/c".
  double parse_number(const std::string& key, const std::string& tok) const {
    std::string t = trim(tok);
    double sign = 1.0;
    if (!t.empty() && (t[0] == '-' || t[0] == '+')) {
      if (t[0] == '-') sign = -1.0;
      t = t.substr(1);
    }
    auto atom = [&](const std::string& a) -> double {
      if (a == "pi") return std::numbers::pi;
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(a, &used);
      } catch (const std::exception&) {
        fail(key, "'" + tok + "' is not a number");
      }
      if (used != a.size()) fail(key, "'" + tok + "' is not a number");
      return v;
    };
    const auto op = t.find_first_of("*/");
    double v = 0.0;
    if (op == std::string::npos) {
      v = atom(t);
    } else {
      const double a = atom(t.substr(0, op));
      const double b = atom(t.substr(op + 1));
      v = t[op] == '*' ? a * b : a / b;
    }
    return sign * v;
  }

  const ScenarioEntries& e_;
};

}  // namespace

Scenario build_scenario(const ScenarioEntries& entries) {
  const Reader r(entries);
  Scenario sc;
  const std::string kind = r.raw("plant.kind");
  sc.name = r.word("scenario.name", kind);

  auto guarded = [&](const std::string& key, auto&& fn) {
    try {
      fn();
    } catch (const ScenarioError&) {
      throw;
    } catch (const std::exception& e) {
      r.fail(key, std::string("validation error: ") + e.what());
    }
  };

  guarded("plant.kind", [&] {
    if (kind == "pendulum") {
      sc.model = make_pendulum_cart(r.number("plant.m"), r.number("plant.M"), r.number("plant.l"),
                                    r.number("plant.gravity", 9.81), r.number("plant.u_max"), r.number("plant.K_u"));
    } else if (kind == "unicycle") {
      sc.model = make_unicycle(r.number("plant.v_bar"), r.number("plant.w_bar"), r.number("plant.K_u"));
    } else {
      r.fail("plant.kind", "plant.kind must be 'pendulum' or 'unicycle'");
    }
  });
  if (r.has("plant.L_phi")) sc.model.L_phi = r.number("plant.L_phi");
  if (r.has("plant.L_G")) sc.model.L_G = r.number("plant.L_G");
  if (!(sc.model.L_phi > 0.0)) r.fail("plant.L_phi", "validation error: plant.L_phi must be positive");
  if (!(sc.model.L_G > 0.0)) r.fail("plant.L_G", "validation error: plant.L_G must be positive");
  const int n = sc.model.n, m = sc.model.m;

  const std::string law = r.word("terminal.law", kind == "unicycle" ? "unicycle-polar" : "linear");
  const Mat Q = r.matrix("cost.Q"), R = r.matrix("cost.R");
  std::optional<LqrTerminal> lqr;
  if (law == "lqr") {
    if (kind != "pendulum") r.fail("terminal.law", "terminal.law 'lqr' needs plant.kind = pendulum");
    if (r.has("cost.P_f")) r.fail("cost.P_f", "cost.P_f is computed when terminal.law = lqr; remove it");
    if (r.has("terminal.K")) r.fail("terminal.K", "terminal.K is computed when terminal.law = lqr; remove it");
    guarded("terminal.margin", [&] {
      lqr = lqr_terminal(pendulum_A(r.number("plant.m"), r.number("plant.M"), r.number("plant.l"),
                                    r.number("plant.gravity", 9.81)),
                         pendulum_B(r.number("plant.M"), r.number("plant.l")), Q, R, r.number("terminal.margin", 1.1));
    });
  }
  const Mat P = lqr ? lqr->P_f : r.matrix("cost.P_f");
  if (Q.rows() != n || Q.cols() != n) r.fail("cost.Q", "cost.Q must be " + std::to_string(n) + "x" + std::to_string(n));
  if (R.rows() != m || R.cols() != m) r.fail("cost.R", "cost.R must be " + std::to_string(m) + "x" + std::to_string(m));
  if (P.rows() != n || P.cols() != n)
    r.fail("cost.P_f", "cost.P_f must be " + std::to_string(n) + "x" + std::to_string(n));
  const bool explicit_l = r.has("cost.L_F") && r.has("cost.L_Vf");
  guarded("cost.Q", [&] {
    sc.cost = CostSpec::quadratic(Q, R, P, explicit_l ? r.number("cost.rho", 1.0) : r.number("cost.rho"));
    if (r.has("cost.L_F")) sc.cost.L_F = r.number("cost.L_F");
    if (r.has("cost.L_Vf")) sc.cost.L_Vf = r.number("cost.L_Vf");
    sc.cost.validate();
  });

  guarded("terminal.eps", [&] {
    const double eps = r.number("terminal.eps"), eps_f = r.number("terminal.eps_f");
    if (law == "linear") {
      const Mat K = r.matrix("terminal.K");
      if (K.rows() != m || K.cols() != n)
        r.fail("terminal.K", "terminal.K must be " + std::to_string(m) + "x" + std::to_string(n));
      sc.term = TerminalSpec::linear(K, eps_f, eps);
    } else if (law == "lqr") {
      sc.term = TerminalSpec::linear(lqr->K, eps_f, eps);
      sc.term.law_name = "lqr";
    } else if (law == "unicycle-polar") {
      if (kind != "unicycle") r.fail("terminal.law", "terminal.law 'unicycle-polar' needs plant.kind = unicycle");
      const auto& hw = sc.model.bounds.half_width;
      sc.term = unicycle_polar_law(hw(0), hw(1), eps_f, eps, r.number("terminal.gain_v", 0.6),
                                   r.number("terminal.gain_w", 1.2), r.number("terminal.gain_h", 1.0));
    } else {
      r.fail("terminal.law", "terminal.law must be 'linear', 'lqr' or 'unicycle-polar'");
    }
  });

  sc.T_p = r.number("sim.T_p");
  sc.x0 = r.vector("sim.x0");
  if (sc.x0.size() != n) r.fail("sim.x0", "sim.x0 must have " + std::to_string(n) + " entries");
  sc.sim_horizon = r.number("sim.horizon", 40.0);
  sc.truth_step = r.number("sim.truth_step", 1e-3);
  sc.delay = r.number("sim.delay", 0.0);
  sc.w_max = r.number("sim.w_max", 0.0);
  sc.rng_seed = static_cast<std::uint64_t>(r.integer("sim.seed", 1));
  sc.max_events = static_cast<int>(r.integer("sim.max_events", 5000));

  sc.trigger.sigma = r.number("trigger.sigma");
  sc.trigger.N = static_cast<int>(r.integer("trigger.N", 1));
  sc.trigger.tau_d_bar = r.number("trigger.tau_d_bar", 0.0);
  sc.trigger.search_step = r.number("trigger.search_step", sc.T_p / 1000.0);
  sc.trigger.root_tol = r.number("trigger.root_tol", 1e-6);
  const std::string sel = r.word("trigger.selection", "algorithm1");
  if (sel == "algorithm1")
    sc.selection = Selection::Algorithm1;
  else if (sel == "optimal")
    sc.selection = Selection::Optimal;
  else
    r.fail("trigger.selection", "trigger.selection must be 'algorithm1' or 'optimal'");
  guarded("trigger.sigma", [&] { sc.trigger.validate(); });

  const std::string mode = r.word("dual.mode", "stand-alone-local");
  if (mode == "stand-alone-local")
    sc.dual.mode = DualModeConfig::Mode::StandAlone;
  else if (mode == "sampled-local")
    sc.dual.mode = DualModeConfig::Mode::Sampled;
  else
    r.fail("dual.mode", "dual.mode must be 'stand-alone-local' or 'sampled-local'");
  sc.dual.delta_l = r.number("dual.delta_l", 0.01);
  guarded("dual.delta_l", [&] { sc.dual.validate(); });

  sc.solver.num_segments = static_cast<int>(r.integer("solver.segments", 56));
  sc.solver.max_outer_iters = static_cast<int>(r.integer("solver.max_outer", 40));
  sc.solver.max_inner_iters = static_cast<int>(r.integer("solver.max_inner", 3000));
  sc.solver.penalty_init = r.number("solver.penalty_init", 10.0);
  sc.solver.penalty_growth = r.number("solver.penalty_growth", 10.0);
  sc.solver.penalty_max = r.number("solver.penalty_max", 1e8);
  sc.solver.grad_tol = r.number("solver.grad_tol", 1e-5);
  sc.solver.con_tol = r.number("solver.con_tol", 1e-6);
  sc.solver.predict_step = r.number("sim.predict_step", 1e-2);
  guarded("solver.segments", [&] { sc.solver.validate(); });

  const std::string lj = r.word("bounds.lipschitz", "lemma1");
  if (lj == "lemma1")
    sc.lipschitz = LipschitzMode::Lemma1;
  else if (lj == "empirical")
    sc.lipschitz = LipschitzMode::Empirical;
  else if (lj == "fixed")
    sc.lipschitz = LipschitzMode::Fixed;
  else
    r.fail("bounds.lipschitz", "bounds.lipschitz must be 'lemma1', 'empirical' or 'fixed'");
  sc.lj_fixed = r.number("bounds.L_J", 0.0);
  sc.lj_probes = static_cast<int>(r.integer("bounds.probes", 4));
  sc.lj_safety = r.number("bounds.safety", 1.0);

  guarded("sim.T_p", [&] { sc.validate(); });
  return sc;
}

Scenario parse_scenario_text(const std::string& text, const std::vector<std::string>& overrides,
                             const std::string& source) {
  ScenarioEntries e = read_scenario_entries(text, source);
  for (const auto& o : overrides) apply_override(e, o);
  return build_scenario(e);
}

Scenario parse_scenario(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot read scenario file", path.string(), 0, 0);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario_text(ss.str(), overrides, path.string());
}

}  // namespace stmpc
