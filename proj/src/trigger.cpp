#include "stmpc/trigger.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace stmpc {

void TriggerConfig::validate() const {
  if (!(sigma > 0.0 && sigma < 1.0)) throw std::invalid_argument("trigger.sigma must satisfy 0 < σ < 1");
  if (N < 1) throw std::invalid_argument("trigger.N must be at least 1");
  if (!(tau_d_bar >= 0.0)) throw std::invalid_argument("trigger.tau_d_bar must be nonnegative");
  if (!(search_step > 0.0)) throw std::invalid_argument("trigger.search_step must be positive");
  if (!(root_tol > 0.0)) throw std::invalid_argument("trigger.root_tol must be positive");
}

double SamplingSchedule::total() const { return std::accumulate(deltas.begin(), deltas.end(), 0.0); }

namespace {

double bound_for(std::span<const double> deltas, const BoundParams& p) {
  return p.w_max > 0.0 ? ex_disturbed(deltas, p) : ex(deltas, p);
}

// Cumulative trapezoid integral of the predicted stage cost, so that each
// margin evaluation during the search costs a binary search instead of a sweep.
class CostAccumulator {
 public:
  explicit CostAccumulator(const OcpSolution& sol)
      : t_(sol.state_traj.t), f_(sol.stage_integrand), cum_(t_.size(), 0.0) {
    for (std::size_t i = 0; i + 1 < t_.size(); ++i) cum_[i + 1] = cum_[i] + 0.5 * (f_[i] + f_[i + 1]) * (t_[i + 1] - t_[i]);
  }

  // Integral from the solution origin to `s` seconds later.
  double from_origin(double s) const {
    const double t = t_.front() + s;
    if (t <= t_.front()) return 0.0;
    if (t >= t_.back()) return cum_.back();
    auto it = std::upper_bound(t_.begin(), t_.end(), t);
    const std::size_t i = static_cast<std::size_t>(it - t_.begin()) - 1;
    const double w = (t - t_[i]) / (t_[i + 1] - t_[i]);
    const double ft = (1.0 - w) * f_[i] + w * f_[i + 1];
    return cum_[i] + 0.5 * (f_[i] + ft) * (t - t_[i]);
  }

 private:
  const std::vector<double>& t_;
  const std::vector<double>& f_;
  std::vector<double> cum_;
};

struct Search {
  double value = 0.0;
  bool capped = false;
};

// March `margin` from `start` in `step` increments up to `cap`; bisect the
// first cell where it becomes nonnegative. Returns the last point known to be
// negative, within `tol` of the crossing.
template <class Margin>
Search first_crossing(const Margin& margin, double start, double cap, double step, double tol) {
  if (cap <= start) return {cap, true};
  double lo = start;
  double hi = start;
  bool found = false;
  while (hi < cap) {
    const double next = std::min(hi + step, cap);
    if (margin(next) >= 0.0) {
      lo = hi;
      hi = next;
      found = true;
      break;
    }
    hi = next;
  }
  if (!found) return {cap, true};
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (margin(mid) >= 0.0)
      hi = mid;
    else
      lo = mid;
  }
  return {lo, false};
}

double schedule_cap(const OcpSolution& sol, const BoundParams& p, const TriggerConfig& cfg) {
  return std::min(p.T_p - cfg.tau_d_bar, sol.horizon) - cfg.root_tol;
}

void fill_samples(SamplingSchedule& s, const OcpSolution& sol) {
  s.samples.clear();
  double t = sol.origin_time;
  s.samples.push_back(sol.control.at(t));
  for (double d : s.deltas) {
    t += d;
    s.samples.push_back(sol.control.at(t));
  }
  s.next_time = sol.origin_time + s.total();
}

SamplingSchedule fallback_schedule(const OcpSolution& sol, const BoundParams& p, const TriggerConfig& cfg,
                                   double dwell, std::vector<double> taus) {
  SamplingSchedule s;
  s.origin_time = sol.origin_time;
  s.tau_list = std::move(taus);
  const double cap = schedule_cap(sol, p, cfg);
  s.deltas = {std::min(dwell, cap)};
  s.capped = dwell >= cap;
  s.fallback = true;
  fill_samples(s, sol);
  return s;
}

}  // namespace

double gamma(std::span<const double> deltas, const OcpSolution& sol, const BoundParams& p) {
  const double total = std::accumulate(deltas.begin(), deltas.end(), 0.0);
  if (total == 0.0) return 0.0;
  if (total > p.T_p + 1e-12 || total > sol.horizon + 1e-12)
    throw std::invalid_argument("gamma: intervals exceed the prediction horizon");
  return bound_for(deltas, p) -
         p.sigma / p.L_J * stage_integral(sol, sol.origin_time, sol.origin_time + total);
}

ViolationTime violation_time(std::span<const double> prefix, const OcpSolution& sol, const BoundParams& p,
                             const TriggerConfig& cfg) {
  const double base = std::accumulate(prefix.begin(), prefix.end(), 0.0);
  const CostAccumulator acc(sol);
  std::vector<double> d(prefix.begin(), prefix.end());
  d.push_back(0.0);
  auto margin = [&](double tau) {
    d.back() = tau;
    return bound_for(d, p) - p.sigma / p.L_J * acc.from_origin(base + tau);
  };
  const Search s = first_crossing(margin, 0.0, schedule_cap(sol, p, cfg) - base, cfg.search_step, cfg.root_tol);
  return {std::max(s.value, 0.0), s.capped};
}

double split_interval(double tau, double L_phi, double root_tol) {
  if (!(tau > 0.0)) throw std::invalid_argument("split_interval: tau must be positive");
  if (!(L_phi > 0.0)) throw std::invalid_argument("split_interval: L_phi must be positive");
  auto g = [&](double delta) { return std::exp(L_phi * (tau - delta)) * (1.0 - L_phi * delta) - 1.0; };
  double lo = 0.0;
  double hi = std::min(tau, 1.0 / L_phi);
  if (!(g(hi) < 0.0) || !(std::expm1(L_phi * tau) > 0.0))
    throw std::logic_error("split_interval: no sign change on the bracket");
  // Bisection to full precision; root_tol is an upper bound on the error.
  (void)root_tol;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (g(mid) > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  const double root = 0.5 * (lo + hi);
  return root > 0.0 ? root : hi;
}

double split_gain(std::span<const double> prefix, double tau, double delta, const BoundParams& p) {
  std::vector<double> whole(prefix.begin(), prefix.end());
  whole.push_back(tau);
  std::vector<double> split(prefix.begin(), prefix.end());
  split.push_back(delta);
  split.push_back(tau - delta);
  return bound_for(whole, p) - bound_for(split, p);
}

SamplingSchedule select_schedule(const OcpSolution& sol, const BoundParams& p, const TriggerConfig& cfg,
                                 double fallback_dwell) {
  cfg.validate();
  SamplingSchedule s;
  s.origin_time = sol.origin_time;
  std::vector<double> prefix;
  for (int n = 1; n <= cfg.N; ++n) {
    const ViolationTime v = violation_time(prefix, sol, p, cfg);
    s.tau_list.push_back(v.tau);
    if (n == 1 && v.tau <= cfg.root_tol) return fallback_schedule(sol, p, cfg, fallback_dwell, s.tau_list);
    s.capped = v.capped;
    if (n == cfg.N || v.tau <= 0.0) {
      prefix.push_back(v.tau);
      break;
    }
    prefix.push_back(split_interval(v.tau, p.L_phi, cfg.root_tol));
  }
  // A cap hit with zero remaining room leaves a trailing empty interval.
  while (prefix.size() > 1 && prefix.back() <= 0.0) prefix.pop_back();
  s.deltas = std::move(prefix);
  fill_samples(s, sol);
  return s;
}

double minimize_ex_split(double total, int N, const BoundParams& p, std::vector<double>* split,
                         const std::vector<double>* warm) {
  if (N < 1) throw std::invalid_argument("minimize_ex_split: N must be positive");
  if (N == 1 || total <= 0.0) {
    std::vector<double> d(static_cast<std::size_t>(N), 0.0);
    d[0] = total;
    const double e = ex(d, p);
    if (split) *split = d;
    return e;
  }
  constexpr int kStarts = 8;
  constexpr int kSweeps = 200;
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  std::mt19937_64 rng(0x5eedULL + static_cast<std::uint64_t>(N));
  std::exponential_distribution<double> expo(1.0);

  std::vector<double> best;
  double best_val = INFINITY;
  std::vector<double> d(static_cast<std::size_t>(N));
  for (int start = 0; start < kStarts; ++start) {
    if (start == 0 && warm && static_cast<int>(warm->size()) == N) {
      const double s = std::accumulate(warm->begin(), warm->end(), 0.0);
      for (int i = 0; i < N; ++i) d[i] = s > 0.0 ? (*warm)[i] * total / s : total / N;
    } else if (start <= 1) {
      std::fill(d.begin(), d.end(), total / N);
    } else {
      double s = 0.0;
      for (double& v : d) s += (v = expo(rng));
      for (double& v : d) v *= total / s;
    }
    double val = ex(d, p);
    for (int sweep = 0; sweep < kSweeps; ++sweep) {
      const double before = val;
      for (int i = 0; i < N; ++i) {
        for (int j = i + 1; j < N; ++j) {
          // Move mass between d[i] and d[j] by golden-section on the transfer.
          const double pool = d[i] + d[j];
          auto eval = [&](double a) {
            d[i] = a;
            d[j] = pool - a;
            return ex(d, p);
          };
          double a = 0.0, b = pool;
          double c1 = b - inv_phi * (b - a), c2 = a + inv_phi * (b - a);
          double f1 = eval(c1), f2 = eval(c2);
          while (b - a > 1e-12 * (1.0 + total)) {
            if (f1 <= f2) {
              b = c2;
              c2 = c1;
              f2 = f1;
              c1 = b - inv_phi * (b - a);
              f1 = eval(c1);
            } else {
              a = c1;
              c1 = c2;
              f1 = f2;
              c2 = a + inv_phi * (b - a);
              f2 = eval(c2);
            }
          }
          double cand[4] = {0.0, pool, c1, c2};
          double cval[4];
          for (int q = 0; q < 4; ++q) cval[q] = eval(cand[q]);
          int bq = 0;
          for (int q = 1; q < 4; ++q)
            if (cval[q] < cval[bq]) bq = q;
          d[i] = cand[bq];
          d[j] = pool - cand[bq];
          val = cval[bq];
        }
      }
      if (before - val <= 1e-15 * std::abs(before)) break;
    }
    if (val < best_val) {
      best_val = val;
      best = d;
    }
  }
  if (split) *split = best;
  return best_val;
}

SamplingSchedule select_schedule_optimal(const OcpSolution& sol, const BoundParams& p, const TriggerConfig& cfg,
                                         double fallback_dwell) {
  cfg.validate();
  if (cfg.N > 5) throw std::invalid_argument("select_schedule_optimal: N must be at most 5");
  const CostAccumulator acc(sol);
  std::vector<double> warm;
  std::vector<double> split;
  const double w_term = p.w_max / p.L_phi;
  auto margin = [&](double total) {
    const double e = minimize_ex_split(total, cfg.N, p, &split, warm.empty() ? nullptr : &warm);
    warm = split;
    const double dist = p.w_max > 0.0 ? w_term * std::expm1(p.L_phi * total) : 0.0;
    return e + dist - p.sigma / p.L_J * acc.from_origin(total);
  };
  const Search s = first_crossing(margin, 0.0, schedule_cap(sol, p, cfg), cfg.search_step, cfg.root_tol);
  if (!s.capped && s.value <= cfg.root_tol) return fallback_schedule(sol, p, cfg, fallback_dwell, {s.value});

  SamplingSchedule out;
  out.origin_time = sol.origin_time;
  out.tau_list = {s.value};
  out.capped = s.capped;
  minimize_ex_split(s.value, cfg.N, p, &split, warm.empty() ? nullptr : &warm);
  // Zero-length intervals carry no sample of their own; drop them.
  for (double d : split)
    if (d > 0.0) out.deltas.push_back(d);
  if (out.deltas.empty()) out.deltas.push_back(s.value);
  fill_samples(out, sol);
  return out;
}

DwellCertificate dwell_certificate(const BoundParams& p, const CostSpec& cost, const TerminalSpec& term,
                                   const OcpSolution* sol) {
  DwellCertificate c;
  const double a = cost.alpha1_coeff * (term.eps_f / cost.alpha2_coeff);
  c.delta_min_1 = std::log1p(p.sigma * p.L_phi * a / (2.0 * p.K_u * p.L_G * p.L_J)) / p.L_phi;
  c.delta_min = c.delta_min_1;

  if (sol && !sol->state_traj.x.empty()) {
    const auto& t = sol->state_traj.t;
    const auto& x = sol->state_traj.x;
    auto crossing = [&](double level) -> std::optional<double> {
      double prev = terminal_cost(cost, x[0]);
      if (prev <= level) return std::nullopt;
      for (std::size_t i = 1; i < x.size(); ++i) {
        const double v = terminal_cost(cost, x[i]);
        if (v <= level) {
          const double w = (prev - level) / (prev - v);
          return t[i - 1] + w * (t[i] - t[i - 1]) - t.front();
        }
        prev = v;
      }
      return std::nullopt;
    };
    const auto d_eps = crossing(term.eps);
    const auto d_epsf = crossing(term.eps_f);
    if (d_eps && d_epsf && *d_epsf > *d_eps) {
      c.delta_min_2 = *d_epsf - *d_eps;
      c.delta_min = std::min(c.delta_min_1, *c.delta_min_2);
    }
  }
  c.delta_bar_J = (1.0 - p.sigma) * a * c.delta_min;
  return c;
}

}  // namespace stmpc
