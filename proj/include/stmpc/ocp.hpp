#pragma once

#include "stmpc/plant.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace stmpc {

/// Quadratic stage cost F = x'Qx + u'Ru and terminal cost V_f = x'P_f x with
/// the constants the stability bounds need.
struct CostSpec {
  Mat Q;
  Mat R;
  Mat P_f;
  double L_F = 0.0;
  double L_Vf = 0.0;
  double alpha1_coeff = 0.0;
  double alpha2_coeff = 0.0;

  /// Fills the derived constants from the weights: alpha1 = lambda_min(Q),
  /// alpha2 = lambda_max(P_f), L_F = 2 lambda_max(Q) rho, L_Vf = 2 lambda_max(P_f) rho,
  /// where rho is the radius of the operating region.
  static CostSpec quadratic(Mat Q, Mat R, Mat P_f, double rho);
  void validate() const;
};

double stage_cost(const CostSpec& cost, const Vec& x, const Vec& u);
double terminal_cost(const CostSpec& cost, const Vec& x);

/// alpha1(r) = a1 r^2 <= F(x,u) and V_f(x) <= alpha2(r) = a2 r^2 with r = |x|.
struct ClassKBounds {
  double a1 = 0.0;
  double a2 = 0.0;
  double alpha1(double r) const { return a1 * r * r; }
  double alpha2(double r) const { return a2 * r * r; }
  double alpha2_inv(double s) const;
};
ClassKBounds class_k_bounds(const CostSpec& cost);

/// Terminal ingredients: the levels eps_f < eps and the local law kappa.
struct TerminalSpec {
  using Law = std::function<Vec(const Vec&)>;
  using LawJacobian = std::function<Mat(const Vec&)>;

  double eps_f = 0.0;
  double eps = 0.0;
  Law law;
  LawJacobian law_jacobian;  // optional; central differences are used when empty
  std::optional<Mat> K_gain;
  std::string law_name;

  static TerminalSpec linear(Mat K, double eps_f, double eps);
  void validate() const;
  Mat jacobian(const Vec& x) const;
};

enum class SolverStatus { Converged, MaxIter, Infeasible };
const char* to_string(SolverStatus s);

struct OcpSolution {
  double origin_time = 0.0;
  double horizon = 0.0;
  ControlSignal control;  // piecewise linear over [origin, origin + horizon]
  Trajectory state_traj;  // prediction grid, inputs included
  std::vector<double> stage_integrand;
  double J_star = 0.0;
  double terminal_value = 0.0;  // V_f at the predicted end state
  SolverStatus status = SolverStatus::MaxIter;
  int outer_iterations = 0;
  int inner_iterations = 0;
  double projected_gradient = 0.0;
  /// Cost of the shifted-plus-kappa initial guess when warm started.
  std::optional<double> candidate_cost;
  bool candidate_feasible = false;

  bool feasible(double eps_f, double con_tol) const { return terminal_value <= eps_f + con_tol; }
};

struct SolverParams {
  int num_segments = 56;
  int max_outer_iters = 40;
  int max_inner_iters = 3000;
  double penalty_init = 10.0;
  double penalty_growth = 10.0;
  double penalty_max = 1e8;
  double grad_tol = 1e-5;
  double con_tol = 1e-6;
  double predict_step = 1e-2;
  std::optional<OcpSolution> warm_start;
  /// Receives one line per outer iteration when set.
  std::ostream* log = nullptr;

  void validate() const;
};

/// Exact Euclidean projection (up to Dykstra convergence) onto the set of node
/// sequences satisfying the input bound at every node and |u_{j+1}-u_j| <= K_u * spacing.
class InputSetProjector {
 public:
  InputSetProjector(InputBounds bounds, double K_u, double spacing, int nodes, int m);
  void project(Vec& z) const;
  double max_rate_violation(const Vec& z) const;

 private:
  InputBounds bounds_;
  double max_step_;
  int nodes_;
  int m_;
  mutable Vec p_box_, p_even_, p_odd_, prev_;
};

/// Direct single-shooting transcription of the finite-horizon problem with a
/// piecewise-linear input on equally spaced nodes and RK4 on the prediction grid.
/// Objective and gradient use the same quadrature, so J_star is reproducible
/// from the returned trajectories.
class Transcription {
 public:
  Transcription(const PlantModel& model, const CostSpec& cost, Vec x0, double t0, double horizon, int segments,
                double step);

  int num_vars() const { return (segments_ + 1) * model_.m; }
  int segments() const { return segments_; }
  int steps_per_segment() const { return steps_; }
  double node_spacing() const { return spacing_; }
  double step() const { return h_; }

  /// Cost J(z) and terminal V_f. When `grad` is non-null it receives
  /// d/dz [J + terminal_weight(V_f) * V_f] evaluated with the scalar returned by
  /// `terminal_weight` (pass {} for the plain gradient of J).
  double evaluate(const Vec& z, double* vf_end, Vec* grad, const std::function<double(double)>& terminal_weight = {});

  OcpSolution make_solution(const Vec& z);
  std::vector<double> node_times() const;

 private:
  void input_at(const Vec& z, int seg, double w, Vec& u) const;
  void forward(const Vec& z);

  const PlantModel& model_;
  const CostSpec& cost_;
  Vec x0_;
  double t0_;
  double horizon_;
  int segments_;
  int steps_;
  double spacing_;
  double h_;
  std::vector<Vec> xs_;
  std::vector<Vec> stage_;  // the three intermediate RK4 points of every step
  DynamicsWorkspace ws_;
  Vec qx_, ru_, gu_, lam_, lx_, b1_, b2_, b3_, b4_;
  Vec k1_, k2_, k3_, k4_, xt_, ua_, ub_, uc_;
  Mat jac_, g_;
};

/// Solves the finite-horizon problem from x0 at time t0.
OcpSolution solve_ocp(const PlantModel& model, const CostSpec& cost, const TerminalSpec& term, const Vec& x0,
                      double T_p, const SolverParams& params, double t0 = 0.0);

/// Builds the shifted-plus-kappa node sequence used to warm start a solve at t0.
Vec shifted_candidate(const PlantModel& model, const TerminalSpec& term, const OcpSolution& previous, double t0,
                      double T_p, int segments, double step);

/// Predicted optimal state at an arbitrary time in the horizon (one partial RK4
/// step from the preceding grid point).
Vec predict_state(const PlantModel& model, const OcpSolution& sol, double t);

/// Uniform samples from the ellipsoid {x : x'P x <= level}.
std::vector<Vec> sample_sublevel_set(const Mat& P, double level, int count, std::uint64_t seed);

struct Assumption2Report {
  int samples = 0;
  double worst_margin = 0.0;  // max of dV_f/dx phi(x,kappa) + F(x,kappa); <= 0 is good
  std::vector<Vec> violations;
  std::vector<Vec> inadmissible;
  bool ok() const { return violations.empty() && inadmissible.empty(); }
};

Assumption2Report verify_assumption2(const PlantModel& model, const CostSpec& cost, const TerminalSpec& term,
                                     int sample_count, std::uint64_t seed = 7, double tol = 0.0);

/// Max over samples in Omega(eps_f) of |d kappa/dx * phi(x, kappa(x))|.
double required_Ku(const PlantModel& model, const CostSpec& cost, const TerminalSpec& term, int sample_count,
                   std::uint64_t seed = 11);

}  // namespace stmpc
