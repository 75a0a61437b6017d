#include "stmpc/dualmode.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace stmpc {

void DualModeConfig::validate() const {
  if (!(delta_l > 0.0)) throw std::invalid_argument("dual.delta_l must be positive");
}

const char* to_string(DualModeConfig::Mode m) {
  return m == DualModeConfig::Mode::Sampled ? "sampled-local" : "stand-alone-local";
}

bool in_region(const Vec& x, const CostSpec& cost, double level) {
  if (!(level > 0.0)) throw std::invalid_argument("in_region: level must be positive");
  return terminal_cost(cost, x) <= level;
}

Vec local_control(const Vec& x, const TerminalSpec& term, const CostSpec& cost, const InputBounds& bounds) {
  if (!in_region(x, cost, term.eps)) throw std::invalid_argument("local_control: state outside Omega(eps)");
  Vec u = term.law(x);
  if (!bounds.contains(u, 1e-12)) {
    std::ostringstream os;
    os << "local law returned an inadmissible input at x = [" << x.transpose() << "], u = [" << u.transpose()
       << "]";
    throw AdmissibilityError(os.str());
  }
  return u;
}

std::pair<Vec, double> sampled_local_step(const Vec& x, const DualModeConfig& cfg, const TerminalSpec& term,
                                          const CostSpec& cost, const InputBounds& bounds) {
  if (cfg.mode != DualModeConfig::Mode::Sampled)
    throw std::invalid_argument("sampled_local_step: dual mode is not sampled-local");
  return {local_control(x, term, cost, bounds), cfg.delta_l};
}

double assumption2_margin(const PlantModel& model, const CostSpec& cost, const TerminalSpec& term, const Vec& x) {
  const Vec u = term.law(x);
  const Vec phi = eval_dynamics(model, x, u);
  double dv = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double d = 1e-6 * (1.0 + std::abs(x(i)));
    Vec xp = x, xm = x;
    xp(i) += d;
    xm(i) -= d;
    dv += (terminal_cost(cost, xp) - terminal_cost(cost, xm)) / (2.0 * d) * phi(i);
  }
  return dv + stage_cost(cost, x, u);
}

namespace {

double wrap_angle(double a) { return std::remainder(a, 2.0 * std::numbers::pi); }

}  // namespace

TerminalSpec unicycle_polar_law(double v_bar, double w_bar, double eps_f, double eps, double gain_v, double gain_w,
                                double gain_h) {
  TerminalSpec t;
  t.eps_f = eps_f;
  t.eps = eps;
  t.law_name = "unicycle-polar";
  t.law = [=](const Vec& s) -> Vec {
    Vec u = Vec::Zero(2);
    const double e = std::hypot(s(0), s(1));
    if (e < 1e-12) {
      u(1) = std::clamp(-gain_w * s(2), -w_bar, w_bar);
      return u;
    }
    // Bearing of the goal seen from the vehicle; reverse when it lies behind.
    const double bearing = std::atan2(-s(1), -s(0));
    double heading = s(2);
    double dir = 1.0;
    double alpha = wrap_angle(bearing - heading);
    if (std::abs(alpha) > std::numbers::pi / 2) {
      dir = -1.0;
      heading = wrap_angle(heading + std::numbers::pi);
      alpha = wrap_angle(bearing - heading);
    }
    // Goal-frame angle measured from the raw heading, so the law steers the
    // unwrapped heading to zero rather than to a multiple of 2 pi.
    const double theta = s(2) + alpha;
    const double sinc = std::abs(alpha) < 1e-8 ? 1.0 : std::sin(alpha) / alpha;
    const double v = gain_v * std::cos(alpha) * e;
    const double w = gain_w * alpha + gain_v * std::cos(alpha) * sinc * (alpha + gain_h * theta);
    u(0) = std::clamp(dir * v, -v_bar, v_bar);
    u(1) = std::clamp(w, -w_bar, w_bar);
    return u;
  };
  t.validate();
  return t;
}

LqrTerminal lqr_terminal(const Mat& A, const Mat& B, const Mat& Q, const Mat& R, double margin) {
  if (!(margin > 1.0)) throw std::invalid_argument("lqr_terminal: margin must exceed 1");
  const Mat P = solve_care(A, B, Q, R);
  LqrTerminal out;
  out.K = -R.ldlt().solve(B.transpose() * P);
  out.P_f = margin * P;
  return out;
}

double admissible_level(const Mat& K, const Mat& P_f, double u_max) {
  // max |Kx| over x'P_f x <= eps is sqrt(eps * lambda_max(K P_f^-1 K'))
  const Mat S = K * P_f.ldlt().solve(K.transpose());
  return u_max * u_max / max_eigenvalue(0.5 * (S + S.transpose()));
}

}  // namespace stmpc
