#include "stmpc/netsim.hpp"

#include <chrono>
#include <climits>
#include <cmath>
#include <functional>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace stmpc {

const char* to_string(LipschitzMode m) {
  switch (m) {
    case LipschitzMode::Lemma1:
      return "lemma1";
    case LipschitzMode::Empirical:
      return "empirical";
    case LipschitzMode::Fixed:
      return "fixed";
  }
  return "?";
}

const char* to_string(Selection s) { return s == Selection::Optimal ? "optimal" : "algorithm1"; }

void Scenario::validate() const {
  if (model.n <= 0 || model.m <= 0) throw std::invalid_argument("scenario: plant model missing");
  cost.validate();
  term.validate();
  trigger.validate();
  dual.validate();
  solver.validate();
  if (x0.size() != model.n) throw DimensionError("sim.x0 must have one entry per state");
  if (!x0.allFinite()) throw std::invalid_argument("sim.x0 must be finite");
  if (!(T_p > 0.0)) throw std::invalid_argument("sim.T_p must be positive");
  if (!(sim_horizon > 0.0)) throw std::invalid_argument("sim.horizon must be positive");
  if (!(truth_step > 0.0)) throw std::invalid_argument("sim.truth_step must be positive");
  if (!(delay >= 0.0) || delay > trigger.tau_d_bar)
    throw std::invalid_argument("sim.delay must satisfy 0 <= delay <= trigger.tau_d_bar");
  if (!(trigger.tau_d_bar < T_p)) throw std::invalid_argument("trigger.tau_d_bar must be below T_p");
  if (!(w_max >= 0.0)) throw std::invalid_argument("sim.w_max must be nonnegative");
  if (max_events < 1) throw std::invalid_argument("sim.max_events must be positive");
  if (lipschitz == LipschitzMode::Fixed && !(lj_fixed > 0.0))
    throw std::invalid_argument("bounds.L_J must be positive in fixed mode");
  if (lj_probes < 1) throw std::invalid_argument("bounds.probes must be positive");
  if (!(lj_safety > 0.0)) throw std::invalid_argument("bounds.safety must be positive");
}

int AuditCounts::total() const {
  return lemma2 + decrease + sigma_v + theorem1 + dwell + input_bound + trigger_soundness + hold_fidelity +
         assumption2 + region_exit;
}

ControlSignal ClosedLoopLog::applied_inputs() const {
  if (applied_times.empty()) throw std::logic_error("applied_inputs: nothing was applied");
  double end = truth.t.empty() ? applied_times.back() : truth.t.back();
  if (end <= applied_times.back()) end = applied_times.back() + 1e-9;
  return ControlSignal::zero_order_hold(applied_times, applied_values, end);
}

std::vector<double> ClosedLoopLog::per_step_solver_seconds() const {
  std::vector<double> out;
  out.reserve(events.size());
  for (const auto& e : events) out.push_back(e.solver_seconds);
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

bool solution_usable(const OcpSolution& sol, const Scenario& sc) {
  return sol.feasible(sc.term.eps_f, sc.solver.con_tol);
}

double central_gradient_norm(const Scenario& sc, const Vec& x, double t0, const OcpSolution& warm) {
  SolverParams sp = sc.solver;
  sp.log = nullptr;
  sp.warm_start = warm;
  const OcpSolution base = solve_ocp(sc.model, sc.cost, sc.term, x, sc.T_p, sp, t0);
  if (!solution_usable(base, sc)) return 0.0;
  sp.warm_start = base;
  const double h = 1e-3 * (1.0 + x.norm());
  double sq = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vec xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    const OcpSolution sp_sol = solve_ocp(sc.model, sc.cost, sc.term, xp, sc.T_p, sp, t0);
    const OcpSolution sm_sol = solve_ocp(sc.model, sc.cost, sc.term, xm, sc.T_p, sp, t0);
    if (!solution_usable(sp_sol, sc) || !solution_usable(sm_sol, sc)) continue;
    const double gi = (sp_sol.J_star - sm_sol.J_star) / (2.0 * h);
    sq += gi * gi;
  }
  return std::sqrt(sq);
}

}  // namespace

double estimate_LJ(const Scenario& sc) {
  SolverParams sp = sc.solver;
  sp.log = nullptr;
  sp.warm_start.reset();
  const OcpSolution first = solve_ocp(sc.model, sc.cost, sc.term, sc.x0, sc.T_p, sp, 0.0);
  if (!solution_usable(first, sc)) {
    std::ostringstream os;
    os << "cannot estimate L_J: the OCP from x0 is infeasible (V_f = " << first.terminal_value
       << " > eps_f = " << sc.term.eps_f << ")";
    throw std::runtime_error(os.str());
  }
  double best = 0.0;
  for (int i = 0; i < sc.lj_probes; ++i) {
    const double s = 0.5 * sc.T_p * i / sc.lj_probes;
    const Vec x = predict_state(sc.model, first, s);
    best = std::max(best, central_gradient_norm(sc, x, s, first));
  }
  if (!(best > 0.0)) throw std::runtime_error("cannot estimate L_J: no usable probe");
  return sc.lj_safety * best;
}

BoundParams make_bound_params(const Scenario& sc, std::ostream* log) {
  BoundParams p = BoundParams::make(sc.model.L_phi, sc.model.L_G, sc.cost.L_F, sc.cost.L_Vf, sc.T_p, sc.model.K_u,
                                    sc.trigger.sigma, sc.w_max);
  switch (sc.lipschitz) {
    case LipschitzMode::Lemma1:
      break;
    case LipschitzMode::Fixed:
      p.L_J = sc.lj_fixed;
      p.lj_source = "fixed";
      break;
    case LipschitzMode::Empirical:
      p.L_J = estimate_LJ(sc);
      p.lj_source = "empirical";
      break;
  }
  if (log) *log << "L_J = " << p.L_J << " (" << p.lj_source << ")\n";
  return p;
}

namespace {

class Engine {
 public:
  Engine(const Scenario& sc, ClosedLoopLog& log) : sc_(sc), log_(log), rng_(sc.rng_seed) {
    if (sc.w_max > 0.0) {
      const double scale = sc.w_max / std::sqrt(static_cast<double>(sc.model.n));
      disturbance_ = [this, scale](double, Vec& w) {
        w.resize(sc_.model.n);
        for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = unif_(rng_);
        w *= scale;
      };
    }
  }

  // Periodic runs pass a fixed period; self-triggered runs use the trigger.
  void run(std::optional<double> period) {
    const int m = sc_.model.m;
    double t = 0.0;
    Vec x = sc_.x0;
    Vec held = Vec::Zero(m);
    std::optional<OcpSolution> prev;
    int fallbacks_in_row = 0;

    while (t < sc_.sim_horizon - 1e-12) {
      if (in_region(x, sc_.cost, sc_.term.eps)) {
        run_local(t, x);
        return;
      }
      if (static_cast<int>(log_.events.size()) >= sc_.max_events)
        throw std::runtime_error("event limit reached before entering the terminal region");

      const double send = t;
      const double origin = t + sc_.delay;
      if (origin >= sc_.sim_horizon) {
        hold_until(t, x, held, sc_.sim_horizon);
        return;
      }
      const Vec x_measured = x;
      Vec x_hat = x;
      if (sc_.delay > 0.0) {
        const auto hold = ControlSignal::zero_order_hold({t}, {held}, origin);
        x_hat = integrate(sc_.model, x, hold, t, origin, sc_.truth_step).back();
        x = hold_until(t, x, held, origin);
      }

      SolverParams sp = sc_.solver;
      sp.warm_start = prev;
      const auto t_solve = Clock::now();
      OcpSolution sol = solve_ocp(sc_.model, sc_.cost, sc_.term, x_hat, sc_.T_p, sp, origin);
      const double solve_s = seconds_since(t_solve);
      if (!solution_usable(sol, sc_)) {
        std::ostringstream os;
        os << "OCP infeasible at t = " << origin << ": V_f(x*(t+T_p)) = " << sol.terminal_value
           << " > eps_f = " << sc_.term.eps_f << " (status " << to_string(sol.status) << ")";
        throw std::runtime_error(os.str());
      }

      const auto t_sel = Clock::now();
      SamplingSchedule sched;
      if (period) {
        sched = periodic_schedule(sol, *period);
      } else if (sc_.selection == Selection::Optimal) {
        sched = select_schedule_optimal(sol, log_.bounds, sc_.trigger, log_.dwell.delta_min_1);
      } else {
        sched = select_schedule(sol, log_.bounds, sc_.trigger, log_.dwell.delta_min_1);
      }
      const double select_s = seconds_since(t_sel);

      fallbacks_in_row = sched.fallback ? fallbacks_in_row + 1 : 0;
      if (fallbacks_in_row > 3)
        throw std::runtime_error("dwell-floor chatter: more than 3 consecutive fallback schedules");

      EventRecord ev;
      ev.k = static_cast<int>(log_.events.size());
      ev.send_time = send;
      ev.t_k = origin;
      ev.x_measured = x_measured;
      ev.x_origin = x_hat;
      ev.J_star = sol.J_star;
      ev.status = sol.status;
      ev.deltas = sched.deltas;
      ev.tau_list = sched.tau_list;
      ev.capped = sched.capped;
      ev.fallback = sched.fallback;
      ev.stage_integral = stage_integral(sol, origin, sched.next_time);
      ev.decrease_bound = (sc_.trigger.sigma - 1.0) * ev.stage_integral;
      ev.solver_seconds = solve_s;
      ev.select_seconds = select_s;

      audit_event_start(ev, period.has_value());
      if (!period) audit_schedule(ev, sol, sched);

      log_.packets.push_back({send, origin, sched});
      log_.events.push_back(ev);

      const double end = std::min(sched.next_time, sc_.sim_horizon);
      x = apply_packet(sol, sched, x, end, log_.events.back());
      held = sched.samples.back();
      prev = std::move(sol);
      t = end;
      if (!x.allFinite() || x.norm() > 1e6) {
        log_.diverged = true;
        throw std::runtime_error("state diverged");
      }
    }
  }

  void finish() {
    if (log_.J0 && log_.dwell.delta_bar_J > 0.0) {
      const double bound = std::ceil(*log_.J0 / log_.dwell.delta_bar_J);
      log_.event_bound = bound > 9e18 ? LONG_MAX : static_cast<long>(bound);
      if (log_.strategy != "periodic" && static_cast<long>(log_.events.size()) > *log_.event_bound)
        log_.audit.theorem1 = 1;
    }
  }

 private:
  SamplingSchedule periodic_schedule(const OcpSolution& sol, double period) const {
    SamplingSchedule s;
    s.origin_time = sol.origin_time;
    s.deltas = {std::min(period, sol.horizon)};
    s.next_time = sol.origin_time + s.deltas[0];
    s.samples = {sol.control.at(sol.origin_time), sol.control.at(sol.origin_time)};
    return s;
  }

  void append(const Trajectory& seg, TruthMode mode) {
    auto& tr = log_.truth;
    std::size_t first = 0;
    if (!tr.t.empty() && !seg.t.empty() && seg.t.front() == tr.t.back()) {
      // The earlier segment's closing row carries the right-continuous input
      // of that segment; the new one starts here.
      tr.u.back() = seg.u.front();
      log_.truth_mode.back() = mode;
      first = 1;
    }
    for (std::size_t i = first; i < seg.t.size(); ++i) {
      tr.t.push_back(seg.t[i]);
      tr.x.push_back(seg.x[i]);
      tr.u.push_back(seg.u[i]);
      log_.truth_mode.push_back(mode);
    }
    for (std::size_t i = 0; i + 1 < seg.t.size(); ++i)
      if (!sc_.model.bounds.contains(seg.u[i], 1e-9)) ++log_.audit.input_bound;
  }

  Vec hold_until(double t0, const Vec& x0, const Vec& u, double t1) {
    const auto sig = ControlSignal::zero_order_hold({t0}, {u}, t1);
    const Trajectory seg = integrate(sc_.model, x0, sig, t0, t1, sc_.truth_step, disturbance_);
    log_.applied_times.push_back(t0);
    log_.applied_values.push_back(u);
    append(seg, TruthMode::Mpc);
    return seg.back();
  }

  Vec apply_packet(const OcpSolution& sol, const SamplingSchedule& sched, const Vec& x0, double end, EventRecord& ev) {
    const std::size_t N = sched.deltas.size();
    std::vector<double> times{sched.origin_time};
    for (std::size_t i = 0; i + 1 < N; ++i) times.push_back(times.back() + sched.deltas[i]);
    std::vector<Vec> values(sched.samples.begin(), sched.samples.begin() + static_cast<long>(N));
    const double sig_end = std::max(sched.next_time, times.back() + 1e-12);
    const auto sig = ControlSignal::zero_order_hold(times, values, sig_end);
    const Trajectory seg = integrate(sc_.model, x0, sig, sched.origin_time, end,
                                     sc_.truth_step, disturbance_);
    for (std::size_t i = 0; i < N; ++i) {
      if (times[i] >= end) break;
      log_.applied_times.push_back(times[i]);
      log_.applied_values.push_back(values[i]);
    }

    // Replay: every truth step must carry exactly the sample of its interval.
    for (std::size_t r = 0; r + 1 < seg.t.size(); ++r) {
      std::size_t j = 0;
      while (j + 1 < N && seg.t[r] >= times[j + 1]) ++j;
      if (seg.u[r] != values[j]) ++log_.audit.hold_fidelity;
    }

    // Deviation audit at each sample time (nominal runs only).
    if (sc_.w_max == 0.0) {
      double ts = sched.origin_time;
      for (std::size_t n = 0; n < N; ++n) {
        ts += sched.deltas[n];
        if (ts > end + 1e-12) break;
        std::size_t row = seg.t.size();
        for (std::size_t r = 0; r < seg.t.size(); ++r)
          if (std::abs(seg.t[r] - ts) <= 1e-9) row = r;
        if (row == seg.t.size()) continue;
        const double dev = (seg.x[row] - predict_state(sc_.model, sol, ts)).norm();
        const double bound = ex(std::span<const double>(sched.deltas.data(), n + 1), log_.bounds);
        ev.deviation.push_back(dev);
        ev.deviation_bound.push_back(bound);
        ++log_.audit.lemma2_checked;
        if (dev > bound + 10.0 * kIntegrationTol) ++log_.audit.lemma2;
      }
    }
    append(seg, TruthMode::Mpc);
    return seg.back();
  }

  void audit_event_start(EventRecord& ev, bool periodic) {
    const bool nominal = sc_.w_max == 0.0;
    if (!log_.J0) log_.J0 = ev.J_star;
    const double tol_j0 = 1e-3 * (1.0 + *log_.J0);
    if (nominal && !periodic && ev.J_star > *log_.J0 + tol_j0) ++log_.audit.sigma_v;
    if (log_.events.empty()) return;
    EventRecord& last = log_.events.back();
    last.cost_diff = ev.J_star - last.J_star;
    if (periodic) {
      if (*last.cost_diff > 0.0) ++log_.cost_increases;
      return;
    }
    if (nominal && sc_.delay == 0.0 && !last.capped && !last.fallback) {
      ++log_.audit.decrease_checked;
      const double tol = 1e-3 * (1.0 + last.J_star);
      if (!(*last.cost_diff < *last.decrease_bound + tol)) ++log_.audit.decrease;
    }
  }

  void audit_schedule(const EventRecord& ev, const OcpSolution& sol, const SamplingSchedule& sched) {
    const double total = sched.total();
    if (!sched.capped && !sched.fallback) {
      ++log_.audit.soundness_checked;
      // The returned schedule still satisfies the trigger condition and a
      // crossing lies within root_tol past its end.
      const double g = gamma(sched.deltas, sol, log_.bounds);
      std::vector<double> longer = sched.deltas;
      longer.back() += sc_.trigger.root_tol;
      const double gl = gamma(longer, sol, log_.bounds);
      if (!(g <= 0.0 && gl >= 0.0)) ++log_.audit.trigger_soundness;
    }
    if (!sched.capped) {
      bool outside = true;
      const auto& tt = sol.state_traj.t;
      for (std::size_t i = 0; i < tt.size() && tt[i] <= ev.t_k + total; ++i)
        if (terminal_cost(sc_.cost, sol.state_traj.x[i]) <= sc_.term.eps_f) outside = false;
      if (outside) {
        ++log_.audit.dwell_checked;
        if (total < log_.dwell.delta_min_1 - sc_.trigger.root_tol) ++log_.audit.dwell;
      }
    }
  }

  void check_local_state(const Vec& x) {
    const double margin = assumption2_margin(sc_.model, sc_.cost, sc_.term, x);
    if (margin > 1e-6 * (1.0 + x.norm())) ++log_.audit.assumption2;
  }

  void run_local(double t, Vec x) {
    log_.switch_time = t;
    const double H = sc_.sim_horizon;
    if (t >= H) return;
    const auto& bounds = sc_.model.bounds;
    if (sc_.dual.mode == DualModeConfig::Mode::StandAlone) {
      const auto law = [&](const Vec& s) {
        Vec u = sc_.term.law(s);
        if (!bounds.contains(u, 1e-9)) throw AdmissibilityError("local law left the input set");
        return u;
      };
      const Trajectory seg =
          integrate(sc_.model, x, ControlSignal::feedback(law, t, H), t, H, sc_.truth_step, disturbance_);
      for (std::size_t i = 0; i < seg.t.size(); ++i) {
        check_local_state(seg.x[i]);
        if (terminal_cost(sc_.cost, seg.x[i]) > sc_.term.eps + 1e-9) ++log_.audit.region_exit;
        if (i + 1 < seg.t.size()) {
          log_.applied_times.push_back(seg.t[i]);
          log_.applied_values.push_back(seg.u[i]);
        }
      }
      append(seg, TruthMode::Local);
      return;
    }
    while (t < H - 1e-12) {
      const auto [u, hold] = sampled_local_step(x, sc_.dual, sc_.term, sc_.cost, bounds);
      const double t1 = std::min(t + hold, H);
      const auto sig = ControlSignal::zero_order_hold({t}, {u}, t1);
      const Trajectory seg = integrate(sc_.model, x, sig, t, t1, sc_.truth_step, disturbance_);
      log_.applied_times.push_back(t);
      log_.applied_values.push_back(u);
      check_local_state(seg.x.front());
      append(seg, TruthMode::Local);
      x = seg.back();
      t = t1;
      if (terminal_cost(sc_.cost, x) > sc_.term.eps + 1e-9) {
        ++log_.audit.region_exit;
        std::ostringstream os;
        os << "state left Omega(eps) under the sampled local controller at t = " << t;
        throw std::runtime_error(os.str());
      }
    }
  }

  const Scenario& sc_;
  ClosedLoopLog& log_;
  std::mt19937_64 rng_;
  std::uniform_real_distribution<double> unif_{-1.0, 1.0};
  DisturbanceFn disturbance_;
};

ClosedLoopLog run_impl(const Scenario& sc, std::optional<double> period) {
  sc.validate();
  ClosedLoopLog log;
  log.scenario = sc.name;
  log.N = period ? 1 : sc.trigger.N;
  log.sigma = sc.trigger.sigma;
  log.period = period;
  log.strategy = period ? "periodic" : (sc.selection == Selection::Optimal ? "optimal-baseline" : "self-triggered");
  Engine engine(sc, log);
  try {
    log.bounds = make_bound_params(sc);
    log.dwell = dwell_certificate(log.bounds, sc.cost, sc.term, nullptr);
    engine.run(period);
  } catch (const IntegrationError& e) {
    log.aborted = true;
    log.diverged = true;
    log.abort_reason = e.what();
  } catch (const std::exception& e) {
    log.aborted = true;
    log.abort_reason = e.what();
  }
  engine.finish();
  return log;
}

}  // namespace

ClosedLoopLog run_self_triggered(const Scenario& sc) { return run_impl(sc, std::nullopt); }

ClosedLoopLog run_periodic(const Scenario& sc, double period) {
  if (!(period > 0.0)) throw std::invalid_argument("run_periodic: period must be positive");
  if (period > sc.T_p) throw std::invalid_argument("run_periodic: period must not exceed T_p");
  return run_impl(sc, period);
}

Summary metrics(const ClosedLoopLog& log, const CostSpec& cost) {
  Summary s;
  s.scenario = log.scenario;
  s.strategy = log.strategy;
  s.N = log.N;
  s.sigma = log.sigma;
  s.period = log.period;
  s.L_J = log.bounds.L_J;
  s.lj_source = log.bounds.lj_source;
  s.mpc_events = static_cast<int>(log.events.size());
  double solve = 0.0, select = 0.0;
  for (const auto& e : log.events) {
    solve += e.solver_seconds;
    select += e.select_seconds;
    if (e.fallback) {
      ++s.fallback_events;
      continue;
    }
    if (e.capped) ++s.capped_events;
    s.intervals.push_back(std::accumulate(e.deltas.begin(), e.deltas.end(), 0.0));
    if (e.cost_diff) {
      s.cost_diffs.push_back(*e.cost_diff);
      s.decrease_bounds.push_back(e.decrease_bound.value_or(0.0));
    }
  }
  if (!s.intervals.empty())
    s.average_interval = std::accumulate(s.intervals.begin(), s.intervals.end(), 0.0) / s.intervals.size();
  if (!log.events.empty()) {
    s.mean_solver_seconds = solve / log.events.size();
    s.mean_select_seconds = select / log.events.size();
    s.final_J_star = log.events.back().J_star;
  }
  s.time_to_region = log.switch_time;
  s.entered_region = log.switch_time.has_value();
  const auto& tr = log.truth;
  if (!tr.x.empty()) {
    s.final_state_norm = tr.x.back().norm();
    for (std::size_t i = 0; i < tr.t.size(); ++i) {
      if (i < tr.u.size()) s.max_input_norm = std::max(s.max_input_norm, tr.u[i].norm());
      if (log.switch_time && !s.time_to_small_state && tr.t[i] >= *log.switch_time && tr.x[i].norm() <= 1e-3)
        s.time_to_small_state = tr.t[i];
      if (i + 1 < tr.t.size()) {
        const double f0 = stage_cost(cost, tr.x[i], tr.u[i]);
        const double f1 = stage_cost(cost, tr.x[i + 1], tr.u[i]);
        s.closed_loop_cost += 0.5 * (f0 + f1) * (tr.t[i + 1] - tr.t[i]);
      }
    }
  }
  s.J0 = log.J0;
  s.delta_min_1 = log.dwell.delta_min_1;
  s.delta_bar_J = log.dwell.delta_bar_J;
  s.event_bound = log.event_bound;
  s.audit = log.audit;
  s.violations = log.audit.total();
  s.cost_increases = log.cost_increases;
  s.aborted = log.aborted;
  s.diverged = log.diverged;
  s.abort_reason = log.abort_reason;
  return s;
}

}  // namespace stmpc
