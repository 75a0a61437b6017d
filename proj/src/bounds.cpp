#include "stmpc/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace stmpc {

namespace {

void check_exponent(double a) {
  if (a > kExponentGuard) throw OverflowGuardError("exponent L_phi*t exceeds the overflow guard");
}

double guarded_exp(double a) {
  check_exponent(a);
  return std::exp(a);
}

// e^a - 1 - a without cancellation for small a.
double expm1_minus_arg(double a) {
  if (std::abs(a) > 0.5) return std::expm1(a) - a;
  double term = 0.5 * a * a;
  double sum = term;
  for (int k = 3; k < 40; ++k) {
    term *= a / k;
    sum += term;
    if (std::abs(term) <= 1e-18 * std::abs(sum)) break;
  }
  return sum;
}

}  // namespace

double lipschitz_LJ(double L_F, double L_phi, double L_Vf, double T_p) {
  const double a = L_phi * T_p;
  return L_Vf * guarded_exp(a) + L_F / L_phi * std::expm1(a);
}

BoundParams BoundParams::make(double L_phi, double L_G, double L_F, double L_Vf, double T_p, double K_u, double sigma,
                              double w_max) {
  BoundParams p;
  p.L_phi = L_phi;
  p.L_G = L_G;
  p.L_F = L_F;
  p.L_Vf = L_Vf;
  p.T_p = T_p;
  p.K_u = K_u;
  p.sigma = sigma;
  p.w_max = w_max;
  p.validate();
  p.L_J = lipschitz_LJ(L_F, L_phi, L_Vf, T_p);
  return p;
}

void BoundParams::validate() const {
  if (!(L_phi > 0 && L_G > 0 && L_F > 0 && L_Vf > 0 && K_u > 0))
    throw std::invalid_argument("Lipschitz constants and K_u must be positive");
  if (!(T_p >= 0)) throw std::invalid_argument("T_p must be nonnegative");
  if (!(sigma > 0.0 && sigma < 1.0)) throw std::invalid_argument("sigma must satisfy 0 < sigma < 1");
  if (!(w_max >= 0.0)) throw std::invalid_argument("w_max must be nonnegative");
}

double hx(double t, const BoundParams& p) {
  if (t < 0.0) throw std::invalid_argument("hx: t must be nonnegative");
  check_exponent(p.L_phi * t);
  const double c = 2.0 * p.K_u * p.L_G / (p.L_phi * p.L_phi);
  return c * expm1_minus_arg(p.L_phi * t);
}

double ex(std::span<const double> deltas, const BoundParams& p) {
  if (deltas.empty()) throw std::invalid_argument("ex: need at least one interval");
  double e = hx(deltas[0], p);
  for (std::size_t n = 1; n < deltas.size(); ++n) e = e * guarded_exp(p.L_phi * deltas[n]) + hx(deltas[n], p);
  return e;
}

double ex_disturbed(std::span<const double> deltas, const BoundParams& p) {
  const double base = ex(deltas, p);
  if (p.w_max == 0.0) return base;
  const double total = std::accumulate(deltas.begin(), deltas.end(), 0.0);
  check_exponent(p.L_phi * total);
  return base + p.w_max / p.L_phi * std::expm1(p.L_phi * total);
}

double stage_integral(const OcpSolution& sol, double from, double to) {
  const auto& t = sol.state_traj.t;
  const auto& f = sol.stage_integrand;
  const double lo = t.front(), hi = t.back();
  const double slack = 1e-9 * (1.0 + std::abs(hi));
  if (from < lo - slack || to > hi + slack || to < from - slack)
    throw std::invalid_argument("stage_integral: interval outside the prediction horizon");
  from = std::clamp(from, lo, hi);
  to = std::clamp(to, lo, hi);
  if (to <= from) return 0.0;

  auto value_at = [&](std::size_t i, double s) {
    const double w = (s - t[i]) / (t[i + 1] - t[i]);
    return (1.0 - w) * f[i] + w * f[i + 1];
  };
  auto cell_of = [&](double s) {
    auto it = std::upper_bound(t.begin(), t.end(), s);
    std::size_t i = it == t.begin() ? 0 : static_cast<std::size_t>(it - t.begin()) - 1;
    return std::min(i, t.size() - 2);
  };

  const std::size_t i0 = cell_of(from);
  const std::size_t i1 = cell_of(to);
  if (i0 == i1) return 0.5 * (value_at(i0, from) + value_at(i0, to)) * (to - from);
  double sum = 0.5 * (value_at(i0, from) + f[i0 + 1]) * (t[i0 + 1] - from);
  for (std::size_t i = i0 + 1; i < i1; ++i) sum += 0.5 * (f[i] + f[i + 1]) * (t[i + 1] - t[i]);
  sum += 0.5 * (f[i1] + value_at(i1, to)) * (to - t[i1]);
  return sum;
}

}  // namespace stmpc
