#pragma once

#include "stmpc/linalg.hpp"

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace stmpc {

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a state component becomes NaN or infinite during integration.
class IntegrationError : public std::runtime_error {
 public:
  IntegrationError(const std::string& what, double time, Vec state)
      : std::runtime_error(what), time_(time), state_(std::move(state)) {}
  double time() const { return time_; }
  const Vec& state() const { return state_; }

 private:
  double time_;
  Vec state_;
};

/// Admissible input set. The pendulum uses a Euclidean ball, the unicycle a
/// per-component box.
struct InputBounds {
  enum class Kind { Ball, Box };
  Kind kind = Kind::Ball;
  double radius = 0.0;  // Ball
  Vec half_width;       // Box

  static InputBounds ball(double radius);
  static InputBounds box(Vec half_width);

  bool contains(const Vec& u, double tol = 0.0) const;
  void project(Vec& u) const;
  /// Largest admissible magnitude along any axis; used for reporting.
  double max_magnitude() const;
};

/// Continuous-time input-affine plant: xdot = f(x) + g(x) u.
struct PlantModel {
  std::string name;
  int n = 0;
  int m = 0;
  std::function<void(const Vec& x, Vec& fx)> drift;
  std::function<void(const Vec& x, Mat& gx)> input_matrix;
  /// d/dx [f(x) + g(x) u]
  std::function<void(const Vec& x, const Vec& u, Mat& jac)> state_jacobian;
  double L_phi = 0.0;
  double L_G = 0.0;
  double K_u = 0.0;
  InputBounds bounds;
};

/// Scratch buffers so the hot loops in the integrator and solver never
/// allocate.
struct DynamicsWorkspace {
  Vec fx;
  Mat gx;
  void resize(const PlantModel& model);
};

void eval_dynamics_into(const PlantModel& model, const Vec& x, const Vec& u, Vec& out, DynamicsWorkspace& ws);
Vec eval_dynamics(const PlantModel& model, const Vec& x, const Vec& u);

/// Input signal applied to the plant.
class ControlSignal {
 public:
  enum class Kind { ZeroOrderHold, PiecewiseLinear, StateFeedback };
  using Law = std::function<Vec(const Vec&)>;

  /// Sample i is held on [times[i], times[i+1]); the last sample is held up to
  /// end_time.
  static ControlSignal zero_order_hold(std::vector<double> times, std::vector<Vec> values, double end_time);
  static ControlSignal piecewise_linear(std::vector<double> times, std::vector<Vec> values);
  static ControlSignal feedback(Law law, double t0, double t1);

  Kind kind() const { return kind_; }
  double start_time() const { return breakpoints_.front(); }
  double end_time() const { return breakpoints_.back(); }
  /// Every time at which the signal (or its slope) may be discontinuous,
  /// including both ends of the domain.
  const std::vector<double>& breakpoints() const { return breakpoints_; }
  const std::vector<Vec>& values() const { return values_; }

  /// Input on the piece [breakpoints[piece], breakpoints[piece+1]] at time t.
  /// `x` is only read for state-feedback signals.
  void evaluate(std::size_t piece, double t, const Vec& x, Vec& u) const;
  /// Right-continuous value at t (not for state feedback).
  Vec at(double t) const;
  std::size_t piece_at(double t) const;

  /// Throws std::invalid_argument if any stored input leaves `bounds` or any
  /// piecewise-linear slope exceeds K_u (both up to `tol`).
  void check_admissible(const InputBounds& bounds, double K_u, double tol) const;

 private:
  Kind kind_ = Kind::ZeroOrderHold;
  std::vector<double> breakpoints_;
  std::vector<Vec> values_;
  Law law_;
};

struct Trajectory {
  std::vector<double> t;
  std::vector<Vec> x;
  std::vector<Vec> u;  // may be empty

  std::size_t size() const { return t.size(); }
  const Vec& back() const { return x.back(); }
};

/// Fills w (held constant over one step) given the step start time.
using DisturbanceFn = std::function<void(double t, Vec& w)>;

/// Classical fixed-step RK4. The grid contains every breakpoint of `signal`
/// inside [t0, t1]; pieces are split into equal steps no longer than h.
Trajectory integrate(const PlantModel& model, const Vec& x0, const ControlSignal& signal, double t0, double t1,
                     double h, const DisturbanceFn& disturbance = {});

/// Linearized inverted pendulum on a cart, state [pos, vel, angle, rate].
PlantModel make_pendulum_cart(double m, double M, double l, double gravity, double u_max = 8.5, double K_u = 2.0);
Mat pendulum_A(double m, double M, double l, double gravity);
Mat pendulum_B(double M, double l);

/// Unicycle with state [x, y, heading] and input [v, omega].
PlantModel make_unicycle(double v_bar, double w_bar, double K_u = 1.5);

}  // namespace stmpc
