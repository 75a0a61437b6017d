#pragma once

#include "stmpc/bounds.hpp"

#include <optional>
#include <span>
#include <vector>

namespace stmpc {

struct TriggerConfig {
  double sigma = 0.99;
  int N = 1;
  double tau_d_bar = 0.0;
  double search_step = 0.014;
  double root_tol = 1e-6;

  void validate() const;
};

struct SamplingSchedule {
  double origin_time = 0.0;
  std::vector<double> deltas;  // delta*_1 .. delta*_N
  double next_time = 0.0;      // origin_time + sum(deltas)
  std::vector<Vec> samples;    // u*(t_k), u*(t_k + Delta_1), ..., u*(t_k + Delta_N)
  std::vector<double> tau_list;
  bool capped = false;    // ended by the horizon / delay budget, not by the trigger
  bool fallback = false;  // degenerate first violation; forced dwell of delta_min_1

  double total() const;
};

struct DwellCertificate {
  double delta_min_1 = 0.0;
  std::optional<double> delta_min_2;
  double delta_min = 0.0;
  double delta_bar_J = 0.0;
};

/// Trigger margin: E_x(deltas) - sigma/L_J * int_{t_k}^{t_k+sum} F. Uses the
/// disturbance-augmented bound when w_max > 0.
double gamma(std::span<const double> deltas, const OcpSolution& sol, const BoundParams& p);

struct ViolationTime {
  double tau = 0.0;
  bool capped = false;
};

/// Smallest tau > 0 with gamma(prefix + [tau]) >= 0, to within root_tol (the
/// returned tau is the last point known to satisfy the trigger condition).
/// Capped at T_p - sum(prefix) - tau_d_bar.
ViolationTime violation_time(std::span<const double> prefix, const OcpSolution& sol, const BoundParams& p,
                             const TriggerConfig& cfg);

/// Root of e^{L_phi (tau - delta)} (1 - L_phi delta) = 1 on (0, min(tau, 1/L_phi)).
double split_interval(double tau, double L_phi, double root_tol);

/// E_x(prefix, tau) - E_x(prefix, delta, tau - delta), evaluated from the two
/// bounds (disturbance-augmented when w_max > 0).
double split_gain(std::span<const double> prefix, double tau, double delta, const BoundParams& p);

/// Adaptive interval selection: alternate violation search and Lemma-3 split.
/// `fallback_dwell` is used when the first violation is degenerate.
SamplingSchedule select_schedule(const OcpSolution& sol, const BoundParams& p, const TriggerConfig& cfg,
                                 double fallback_dwell);

/// Baseline: for each total time, minimise E_x over the interval splits and
/// return the first total time where the minimised margin reaches zero.
SamplingSchedule select_schedule_optimal(const OcpSolution& sol, const BoundParams& p, const TriggerConfig& cfg,
                                         double fallback_dwell);

/// Minimum of E_x over splits of `total` into `N` nonnegative intervals
/// (multi-start pairwise coordinate descent). `split` receives the argmin.
double minimize_ex_split(double total, int N, const BoundParams& p, std::vector<double>* split,
                         const std::vector<double>* warm = nullptr);

DwellCertificate dwell_certificate(const BoundParams& p, const CostSpec& cost, const TerminalSpec& term,
                                   const OcpSolution* sol = nullptr);

}  // namespace stmpc
