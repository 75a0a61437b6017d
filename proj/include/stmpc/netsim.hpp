#pragma once

#include "stmpc/dualmode.hpp"
#include "stmpc/trigger.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace stmpc {

enum class LipschitzMode { Lemma1, Empirical, Fixed };
enum class Selection { Algorithm1, Optimal };

const char* to_string(LipschitzMode m);
const char* to_string(Selection s);

/// Allowance for the difference between the truth integrator and the solver's
/// prediction grid in the deviation audit.
inline constexpr double kIntegrationTol = 1e-6;

struct Scenario {
  std::string name;
  PlantModel model;
  CostSpec cost;
  TerminalSpec term;
  TriggerConfig trigger;
  Selection selection = Selection::Algorithm1;
  DualModeConfig dual;
  SolverParams solver;
  Vec x0;
  double T_p = 0.0;
  double sim_horizon = 40.0;
  double truth_step = 1e-3;
  double delay = 0.0;  // constant network delay, at most trigger.tau_d_bar
  double w_max = 0.0;
  std::uint64_t rng_seed = 1;
  int max_events = 5000;

  LipschitzMode lipschitz = LipschitzMode::Lemma1;
  double lj_fixed = 0.0;
  int lj_probes = 4;
  double lj_safety = 1.0;

  void validate() const;
};

struct Packet {
  double send_time = 0.0;
  double arrival_time = 0.0;
  SamplingSchedule schedule;
};

struct EventRecord {
  int k = 0;
  double send_time = 0.0;
  double t_k = 0.0;  // time the packet's first sample is applied
  Vec x_measured;
  Vec x_origin;  // state the OCP was solved from
  double J_star = 0.0;
  SolverStatus status = SolverStatus::Converged;
  std::vector<double> deltas;
  std::vector<double> tau_list;
  bool capped = false;
  bool fallback = false;
  double stage_integral = 0.0;  // predicted cost over [t_k, t_k + sum(deltas)]
  double solver_seconds = 0.0;
  double select_seconds = 0.0;
  std::optional<double> cost_diff;       // J*(next) - J*(this)
  std::optional<double> decrease_bound;  // (sigma - 1) * stage_integral
  std::vector<double> deviation;         // realized |x - x*| at each sample time
  std::vector<double> deviation_bound;   // E_x at each sample time
};

struct AuditCounts {
  int lemma2 = 0;
  int decrease = 0;
  int sigma_v = 0;
  int theorem1 = 0;
  int dwell = 0;
  int input_bound = 0;
  int trigger_soundness = 0;
  int hold_fidelity = 0;
  int assumption2 = 0;
  int region_exit = 0;

  int lemma2_checked = 0;
  int decrease_checked = 0;
  int dwell_checked = 0;
  int soundness_checked = 0;

  int total() const;
};

enum class TruthMode : std::uint8_t { Mpc, Local };

struct ClosedLoopLog {
  std::string scenario;
  std::string strategy;  // self-triggered, optimal-baseline, periodic
  int N = 1;
  double sigma = 0.0;
  std::optional<double> period;
  BoundParams bounds;
  DwellCertificate dwell;
  std::vector<EventRecord> events;
  std::vector<Packet> packets;
  Trajectory truth;
  std::vector<TruthMode> truth_mode;
  std::vector<double> applied_times;
  std::vector<Vec> applied_values;
  std::optional<double> switch_time;
  std::optional<double> J0;
  std::optional<long> event_bound;
  AuditCounts audit;
  int cost_increases = 0;  // periodic runs: recorded, not a violation
  bool aborted = false;
  bool diverged = false;
  std::string abort_reason;

  /// Zero-order hold of every applied input value over the simulated window.
  ControlSignal applied_inputs() const;
  std::vector<double> per_step_solver_seconds() const;
};

/// Lipschitz constant of the optimal cost used by the trigger, per the
/// scenario's lipschitz mode. The empirical estimate is the largest
/// central-difference gradient of J* over probe states on the first optimal
/// trajectory, times `lj_safety`.
BoundParams make_bound_params(const Scenario& sc, std::ostream* log = nullptr);
double estimate_LJ(const Scenario& sc);

ClosedLoopLog run_self_triggered(const Scenario& sc);
ClosedLoopLog run_periodic(const Scenario& sc, double period);

struct Summary {
  std::string scenario;
  std::string strategy;
  int N = 1;
  double sigma = 0.0;
  std::optional<double> period;
  double L_J = 0.0;
  std::string lj_source;
  int mpc_events = 0;
  int fallback_events = 0;
  int capped_events = 0;
  std::optional<double> average_interval;
  std::vector<double> intervals;
  std::vector<double> cost_diffs;
  std::vector<double> decrease_bounds;
  std::optional<double> time_to_region;
  std::optional<double> time_to_small_state;  // |x| <= 1e-3 after switching
  bool entered_region = false;
  double final_state_norm = 0.0;
  double max_input_norm = 0.0;
  double closed_loop_cost = 0.0;  // integral of F along the truth
  std::optional<double> J0;
  std::optional<double> final_J_star;
  double mean_solver_seconds = 0.0;
  double mean_select_seconds = 0.0;
  double delta_min_1 = 0.0;
  double delta_bar_J = 0.0;
  std::optional<long> event_bound;
  AuditCounts audit;
  int violations = 0;
  int cost_increases = 0;
  bool aborted = false;
  bool diverged = false;
  std::string abort_reason;
};

Summary metrics(const ClosedLoopLog& log, const CostSpec& cost);

}  // namespace stmpc
