#include "stmpc/artifacts.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unistd.h>

namespace stmpc {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    if (!out) {
      out.close();
      std::filesystem::remove(tmp);
      throw std::runtime_error("write failed for " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw std::filesystem::filesystem_error("cannot replace " + path.string(), tmp, path, ec);
  }
}

std::string transmissions_csv(const ClosedLoopLog& log) {
  std::size_t width = static_cast<std::size_t>(log.N);
  for (const auto& e : log.events) width = std::max(width, e.deltas.size());
  std::ostringstream os;
  os << "k,t_k,N";
  for (std::size_t i = 1; i <= width; ++i) os << ",delta_" << i;
  os << ",J_star,capped,solver_seconds,fallback";
  for (std::size_t i = 1; i <= width; ++i) os << ",tau_" << i;
  os << '\n';
  for (const auto& e : log.events) {
    os << e.k << ',' << format_double(e.t_k) << ',' << e.deltas.size();
    for (std::size_t i = 0; i < width; ++i) {
      os << ',';
      if (i < e.deltas.size()) os << format_double(e.deltas[i]);
    }
    os << ',' << format_double(e.J_star) << ',' << (e.capped ? 1 : 0) << ',' << format_double(e.solver_seconds)
       << ',' << (e.fallback ? 1 : 0);
    for (std::size_t i = 0; i < width; ++i) {
      os << ',';
      if (i < e.tau_list.size()) os << format_double(e.tau_list[i]);
    }
    os << '\n';
  }
  return os.str();
}

std::string trajectory_csv(const ClosedLoopLog& log) {
  const auto& tr = log.truth;
  std::ostringstream os;
  const Eigen::Index n = tr.x.empty() ? 0 : tr.x.front().size();
  const Eigen::Index m = tr.u.empty() ? 0 : tr.u.front().size();
  os << 't';
  for (Eigen::Index i = 1; i <= n; ++i) os << ",x_" << i;
  for (Eigen::Index i = 1; i <= m; ++i) os << ",u_" << i;
  os << ",mode\n";
  for (std::size_t r = 0; r < tr.t.size(); ++r) {
    os << format_double(tr.t[r]);
    for (Eigen::Index i = 0; i < n; ++i) os << ',' << format_double(tr.x[r](i));
    for (Eigen::Index i = 0; i < m; ++i) os << ',' << format_double(tr.u[r](i));
    os << ',' << (log.truth_mode[r] == TruthMode::Local ? "local" : "mpc") << '\n';
  }
  return os.str();
}

namespace {

template <class T>
nlohmann::json opt(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

nlohmann::json summary_json(const Summary& s) {
  nlohmann::json audit = {
      {"lemma2", s.audit.lemma2},
      {"decrease", s.audit.decrease},
      {"sigma_v", s.audit.sigma_v},
      {"theorem1_event_bound", s.audit.theorem1},
      {"dwell", s.audit.dwell},
      {"input_bound", s.audit.input_bound},
      {"trigger_soundness", s.audit.trigger_soundness},
      {"hold_fidelity", s.audit.hold_fidelity},
      {"assumption2", s.audit.assumption2},
      {"region_exit", s.audit.region_exit},
      {"lemma2_checked", s.audit.lemma2_checked},
      {"decrease_checked", s.audit.decrease_checked},
      {"dwell_checked", s.audit.dwell_checked},
      {"soundness_checked", s.audit.soundness_checked},
  };
  return {
      {"scenario", s.scenario},
      {"strategy", s.strategy},
      {"N", s.N},
      {"sigma", s.sigma},
      {"period", opt(s.period)},
      {"L_J", s.L_J},
      {"L_J_source", s.lj_source},
      {"mpc_events", s.mpc_events},
      {"fallback_events", s.fallback_events},
      {"capped_events", s.capped_events},
      {"average_interval", opt(s.average_interval)},
      {"intervals", s.intervals},
      {"cost_diffs", s.cost_diffs},
      {"decrease_bounds", s.decrease_bounds},
      {"entered_region", s.entered_region},
      {"time_to_region", opt(s.time_to_region)},
      {"time_to_small_state", opt(s.time_to_small_state)},
      {"final_state_norm", s.final_state_norm},
      {"max_input_norm", s.max_input_norm},
      {"closed_loop_cost", s.closed_loop_cost},
      {"J0", opt(s.J0)},
      {"final_J_star", opt(s.final_J_star)},
      {"mean_solver_seconds", s.mean_solver_seconds},
      {"mean_select_seconds", s.mean_select_seconds},
      {"delta_min_1", s.delta_min_1},
      {"delta_bar_J", s.delta_bar_J},
      {"event_bound", opt(s.event_bound)},
      {"violations", s.violations},
      {"audit", audit},
      {"cost_increases", s.cost_increases},
      {"aborted", s.aborted},
      {"diverged", s.diverged},
      {"abort_reason", s.abort_reason},
  };
}

void write_run_artifacts(const std::filesystem::path& dir, const ClosedLoopLog& log, const Summary& s) {
  std::filesystem::create_directories(dir);
  write_atomic(dir / "transmissions.csv", transmissions_csv(log));
  write_atomic(dir / "trajectory.csv", trajectory_csv(log));
  write_atomic(dir / "summary.json", summary_json(s).dump(2) + "\n");
}

}  // namespace stmpc
