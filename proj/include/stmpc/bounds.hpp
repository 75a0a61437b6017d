#pragma once

#include "stmpc/ocp.hpp"

#include <span>
#include <stdexcept>

namespace stmpc {

/// Raised when L_phi * t exceeds the overflow guard (signals a horizon or
/// Lipschitz constant that makes the exponential bounds meaningless).
class OverflowGuardError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

inline constexpr double kExponentGuard = 50.0;

/// Constants entering the deviation bounds and the trigger.
struct BoundParams {
  double L_phi = 0.0;
  double L_G = 0.0;
  double L_F = 0.0;
  double L_Vf = 0.0;
  double T_p = 0.0;
  double K_u = 0.0;
  double sigma = 0.0;
  double w_max = 0.0;
  /// Lipschitz constant of the optimal cost. Equal to lipschitz_LJ(...) unless
  /// an estimated value was substituted (see `lj_source`).
  double L_J = 0.0;
  std::string lj_source = "lemma1";

  /// Builds the parameter set with L_J from the closed form.
  static BoundParams make(double L_phi, double L_G, double L_F, double L_Vf, double T_p, double K_u, double sigma,
                          double w_max = 0.0);
  void validate() const;
};

/// Lipschitz constant of J*: (L_F/L_phi + L_Vf) e^{L_phi T_p} - L_F/L_phi.
double lipschitz_LJ(double L_F, double L_phi, double L_Vf, double T_p);

/// Deviation bound after holding u*(t_k) for time t.
double hx(double t, const BoundParams& p);

/// Deviation bound after the held samples with intervals `deltas`.
double ex(std::span<const double> deltas, const BoundParams& p);

/// ex plus the disturbance envelope (w_max/L_phi)(e^{L_phi sum} - 1).
double ex_disturbed(std::span<const double> deltas, const BoundParams& p);

/// Integral of the predicted stage cost over [from, to] (absolute times).
double stage_integral(const OcpSolution& sol, double from, double to);

}  // namespace stmpc
