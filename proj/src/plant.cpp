#include "stmpc/plant.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace stmpc {

namespace {

constexpr double kTimeEps = 1e-12;

bool same_time(double a, double b) { return std::abs(a - b) <= kTimeEps * (1.0 + std::abs(a) + std::abs(b)); }

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

InputBounds InputBounds::ball(double radius) {
  require(radius > 0.0, "input bound must be positive");
  InputBounds b;
  b.kind = Kind::Ball;
  b.radius = radius;
  return b;
}

InputBounds InputBounds::box(Vec half_width) {
  require(half_width.size() > 0 && (half_width.array() > 0.0).all(), "input box half-widths must be positive");
  InputBounds b;
  b.kind = Kind::Box;
  b.half_width = std::move(half_width);
  return b;
}

bool InputBounds::contains(const Vec& u, double tol) const {
  if (kind == Kind::Ball) return u.norm() <= radius + tol;
  return ((u.array().abs() - half_width.array()) <= tol).all();
}

void InputBounds::project(Vec& u) const {
  if (kind == Kind::Ball) {
    const double nrm = u.norm();
    if (nrm > radius) u *= radius / nrm;
  } else {
    u = u.cwiseMax(-half_width).cwiseMin(half_width);
  }
}

double InputBounds::max_magnitude() const { return kind == Kind::Ball ? radius : half_width.maxCoeff(); }

void DynamicsWorkspace::resize(const PlantModel& model) {
  fx.resize(model.n);
  gx.resize(model.n, model.m);
}

void eval_dynamics_into(const PlantModel& model, const Vec& x, const Vec& u, Vec& out, DynamicsWorkspace& ws) {
  model.drift(x, ws.fx);
  model.input_matrix(x, ws.gx);
  out = ws.fx;
  out.noalias() += ws.gx * u;
}

Vec eval_dynamics(const PlantModel& model, const Vec& x, const Vec& u) {
  if (x.size() != model.n || u.size() != model.m) {
    std::ostringstream os;
    os << "eval_dynamics: expected x in R^" << model.n << " and u in R^" << model.m << ", got " << x.size() << " and "
       << u.size();
    throw DimensionError(os.str());
  }
  DynamicsWorkspace ws;
  ws.resize(model);
  Vec out(model.n);
  eval_dynamics_into(model, x, u, out, ws);
  return out;
}

// ---------------------------------------------------------------------------
// ControlSignal

ControlSignal ControlSignal::zero_order_hold(std::vector<double> times, std::vector<Vec> values, double end_time) {
  require(!times.empty() && times.size() == values.size(), "zero-order hold needs one value per sample time");
  for (std::size_t i = 1; i < times.size(); ++i) require(times[i] > times[i - 1], "sample times must increase");
  require(end_time > times.back(), "end time must follow the last sample");
  ControlSignal s;
  s.kind_ = Kind::ZeroOrderHold;
  s.breakpoints_ = std::move(times);
  s.breakpoints_.push_back(end_time);
  s.values_ = std::move(values);
  return s;
}

ControlSignal ControlSignal::piecewise_linear(std::vector<double> times, std::vector<Vec> values) {
  require(times.size() >= 2 && times.size() == values.size(), "piecewise-linear signal needs >= 2 nodes");
  for (std::size_t i = 1; i < times.size(); ++i) require(times[i] > times[i - 1], "node times must increase");
  ControlSignal s;
  s.kind_ = Kind::PiecewiseLinear;
  s.breakpoints_ = std::move(times);
  s.values_ = std::move(values);
  return s;
}

ControlSignal ControlSignal::feedback(Law law, double t0, double t1) {
  require(t1 > t0, "feedback signal needs t1 > t0");
  ControlSignal s;
  s.kind_ = Kind::StateFeedback;
  s.breakpoints_ = {t0, t1};
  s.law_ = std::move(law);
  return s;
}

std::size_t ControlSignal::piece_at(double t) const {
  const auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), t);
  std::size_t idx = it == breakpoints_.begin() ? 0 : static_cast<std::size_t>(it - breakpoints_.begin()) - 1;
  return std::min(idx, breakpoints_.size() - 2);
}

void ControlSignal::evaluate(std::size_t piece, double t, const Vec& x, Vec& u) const {
  switch (kind_) {
    case Kind::ZeroOrderHold:
      u = values_[std::min(piece, values_.size() - 1)];
      return;
    case Kind::PiecewiseLinear: {
      const double a = breakpoints_[piece], b = breakpoints_[piece + 1];
      const double w = std::clamp((t - a) / (b - a), 0.0, 1.0);
      u = (1.0 - w) * values_[piece] + w * values_[piece + 1];
      return;
    }
    case Kind::StateFeedback:
      u = law_(x);
      return;
  }
}

Vec ControlSignal::at(double t) const {
  require(kind_ != Kind::StateFeedback, "state-feedback signal has no open-loop value");
  Vec u;
  evaluate(piece_at(t), t, Vec(), u);
  return u;
}

void ControlSignal::check_admissible(const InputBounds& bounds, double K_u, double tol) const {
  for (const auto& v : values_) {
    if (!bounds.contains(v, tol)) throw std::invalid_argument("control sample violates the input bound");
  }
  if (kind_ == Kind::PiecewiseLinear) {
    for (std::size_t j = 0; j + 1 < values_.size(); ++j) {
      const double slope = (values_[j + 1] - values_[j]).norm() / (breakpoints_[j + 1] - breakpoints_[j]);
      if (slope > K_u + tol) throw std::invalid_argument("control slope exceeds the rate bound K_u");
    }
  }
}

// ---------------------------------------------------------------------------
// Integration

Trajectory integrate(const PlantModel& model, const Vec& x0, const ControlSignal& signal, double t0, double t1,
                     double h, const DisturbanceFn& disturbance) {
  require(t1 > t0, "integrate: t1 must exceed t0");
  require(h > 0.0, "integrate: step must be positive");
  if (x0.size() != model.n) throw DimensionError("integrate: initial state has wrong dimension");
  const auto& bp = signal.breakpoints();
  if (t0 < bp.front() && !same_time(t0, bp.front())) throw std::invalid_argument("integrate: signal undefined at t0");
  if (t1 > bp.back() && !same_time(t1, bp.back())) throw std::invalid_argument("integrate: signal undefined at t1");

  // Piece boundaries: t0, every interior breakpoint, t1.
  std::vector<double> marks{t0};
  for (double b : bp) {
    if (b > t0 && b < t1 && !same_time(b, t0) && !same_time(b, t1)) marks.push_back(b);
  }
  marks.push_back(t1);

  Trajectory traj;
  const std::size_t est = static_cast<std::size_t>((t1 - t0) / h) + marks.size() + 1;
  traj.t.reserve(est);
  traj.x.reserve(est);
  traj.u.reserve(est);

  DynamicsWorkspace ws;
  ws.resize(model);
  Vec x = x0, k1(model.n), k2(model.n), k3(model.n), k4(model.n), xs(model.n), u(model.m), w;
  if (disturbance) w = Vec::Zero(model.n);

  auto stage = [&](std::size_t piece, double t, const Vec& xin, Vec& k) {
    signal.evaluate(piece, t, xin, u);
    eval_dynamics_into(model, xin, u, k, ws);
    if (disturbance) k += w;
  };

  traj.t.push_back(t0);
  traj.x.push_back(x);
  {
    Vec u0;
    signal.evaluate(signal.piece_at(t0), t0, x, u0);
    traj.u.push_back(u0);
  }

  for (std::size_t p = 0; p + 1 < marks.size(); ++p) {
    const double a = marks[p], b = marks[p + 1];
    const std::size_t piece = signal.piece_at(0.5 * (a + b));
    const long steps = std::max(1L, static_cast<long>(std::ceil((b - a) / h - 1e-9)));
    const double hs = (b - a) / static_cast<double>(steps);
    for (long s = 0; s < steps; ++s) {
      const double t = a + hs * static_cast<double>(s);
      if (disturbance) disturbance(t, w);
      stage(piece, t, x, k1);
      xs = x + 0.5 * hs * k1;
      stage(piece, t + 0.5 * hs, xs, k2);
      xs = x + 0.5 * hs * k2;
      stage(piece, t + 0.5 * hs, xs, k3);
      xs = x + hs * k3;
      const double tn = (s + 1 == steps) ? b : a + hs * static_cast<double>(s + 1);
      stage(piece, tn, xs, k4);
      x += (hs / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      if (!x.allFinite()) {
        std::ostringstream os;
        os << "integrate: non-finite state at t=" << tn;
        throw IntegrationError(os.str(), tn, x);
      }
      traj.t.push_back(tn);
      traj.x.push_back(x);
      Vec un;
      const std::size_t next_piece = (s + 1 == steps && p + 2 < marks.size()) ? signal.piece_at(0.5 * (b + marks[p + 2])) : piece;
      signal.evaluate(next_piece, tn, x, un);
      traj.u.push_back(std::move(un));
    }
  }

  // Every breakpoint strictly inside (t0, t1) must be a grid point.
  for (double bpt : bp) {
    if (bpt <= t0 || bpt >= t1 || same_time(bpt, t0) || same_time(bpt, t1)) continue;
    const auto it = std::lower_bound(traj.t.begin(), traj.t.end(), bpt - kTimeEps * (1.0 + std::abs(bpt)));
    if (it == traj.t.end() || !same_time(*it, bpt)) throw std::logic_error("integrate: breakpoint missing from grid");
  }
  return traj;
}

// ---------------------------------------------------------------------------
// Shipped models

Mat pendulum_A(double m, double M, double l, double gravity) {
  Mat A = Mat::Zero(4, 4);
  A(0, 1) = 1.0;
  A(1, 2) = -m * gravity / M;
  A(2, 3) = 1.0;
  A(3, 2) = gravity / l;
  return A;
}

Mat pendulum_B(double M, double l) {
  Mat B = Mat::Zero(4, 1);
  B(1, 0) = 1.0 / M;
  B(3, 0) = -1.0 / (M * l);
  return B;
}

PlantModel make_pendulum_cart(double m, double M, double l, double gravity, double u_max, double K_u) {
  require(m > 0 && M > 0 && l > 0 && gravity > 0, "pendulum parameters must be positive");
  require(u_max > 0 && K_u > 0, "pendulum input bounds must be positive");
  const Mat A = pendulum_A(m, M, l, gravity);
  const Mat B = pendulum_B(M, l);
  PlantModel model;
  model.name = "pendulum_cart";
  model.n = 4;
  model.m = 1;
  model.drift = [A](const Vec& x, Vec& fx) { fx.noalias() = A * x; };
  model.input_matrix = [B](const Vec&, Mat& gx) { gx = B; };
  model.state_jacobian = [A](const Vec&, const Vec&, Mat& jac) { jac = A; };
  const bool published = m == 0.55 && M == 15.0 && l == 9.0 && gravity == 9.81;
  model.L_phi = published ? 1.05 : spectral_norm(A);
  model.L_G = published ? 0.067 : spectral_norm(B);
  model.K_u = K_u;
  model.bounds = InputBounds::ball(u_max);
  return model;
}

PlantModel make_unicycle(double v_bar, double w_bar, double K_u) {
  require(v_bar > 0 && w_bar > 0 && K_u > 0, "unicycle bounds must be positive");
  PlantModel model;
  model.name = "unicycle";
  model.n = 3;
  model.m = 2;
  model.drift = [](const Vec&, Vec& fx) { fx.setZero(3); };
  model.input_matrix = [](const Vec& x, Mat& gx) {
    gx.setZero(3, 2);
    gx(0, 0) = std::cos(x(2));
    gx(1, 0) = std::sin(x(2));
    gx(2, 1) = 1.0;
  };
  model.state_jacobian = [](const Vec& x, const Vec& u, Mat& jac) {
    jac.setZero(3, 3);
    jac(0, 2) = -std::sin(x(2)) * u(0);
    jac(1, 2) = std::cos(x(2)) * u(0);
  };
  model.L_phi = std::sqrt(2.0) * v_bar;
  model.L_G = 1.0;
  model.K_u = K_u;
  Vec hw(2);
  hw << v_bar, w_bar;
  model.bounds = InputBounds::box(hw);
  return model;
}

}  // namespace stmpc
