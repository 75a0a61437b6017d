#pragma once

#include "stmpc/ocp.hpp"

#include <stdexcept>
#include <utility>

namespace stmpc {

/// Raised when the local law leaves the admissible input set, which signals a
/// terminal region that is too large for the law.
class AdmissibilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DualModeConfig {
  enum class Mode { StandAlone, Sampled };
  Mode mode = Mode::StandAlone;
  double delta_l = 0.01;

  void validate() const;
};

const char* to_string(DualModeConfig::Mode m);

bool in_region(const Vec& x, const CostSpec& cost, double level);

/// kappa(x) for x in Omega(eps). Throws AdmissibilityError when kappa(x) is not
/// admissible and std::invalid_argument when x is outside Omega(eps).
Vec local_control(const Vec& x, const TerminalSpec& term, const CostSpec& cost, const InputBounds& bounds);

/// Value to hold and the hold length under the sampled local controller.
std::pair<Vec, double> sampled_local_step(const Vec& x, const DualModeConfig& cfg, const TerminalSpec& term,
                                          const CostSpec& cost, const InputBounds& bounds);

/// Margin of the terminal decrease condition at x: dV_f/dx * phi(x, kappa(x)) + F(x, kappa(x)),
/// with the V_f gradient taken by central differences.
double assumption2_margin(const PlantModel& model, const CostSpec& cost, const TerminalSpec& term, const Vec& x);

/// Linear terminal ingredients from the LQR design: K = -R^-1 B' P and
/// P_f = margin * P with P the Riccati solution, so that along the linear
/// closed loop dV_f/dt + F = -(margin - 1) x'(Q + K'RK)x.
struct LqrTerminal {
  Mat K;
  Mat P_f;
};
LqrTerminal lqr_terminal(const Mat& A, const Mat& B, const Mat& Q, const Mat& R, double margin);

/// Largest level eps with |K x| <= u_max on {x : x'P_f x <= eps}.
double admissible_level(const Mat& K, const Mat& P_f, double u_max);

/// Saturated polar-coordinate stabilizer for the unicycle (Aicardi-type law,
/// driving forwards or backwards depending on the bearing). The gains are
/// fixed; v and omega are clipped to the box bounds.
TerminalSpec unicycle_polar_law(double v_bar, double w_bar, double eps_f, double eps, double gain_v = 0.6,
                                double gain_w = 1.2, double gain_h = 1.0);

}  // namespace stmpc
