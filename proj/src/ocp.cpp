#include "stmpc/ocp.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

namespace stmpc {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

// ---------------------------------------------------------------------------
// Costs

CostSpec CostSpec::quadratic(Mat Q, Mat R, Mat P_f, double rho) {
  require(rho > 0.0, "operating radius rho must be positive");
  CostSpec c;
  c.Q = std::move(Q);
  c.R = std::move(R);
  c.P_f = std::move(P_f);
  c.alpha1_coeff = min_eigenvalue(c.Q);
  c.alpha2_coeff = max_eigenvalue(c.P_f);
  c.L_F = 2.0 * max_eigenvalue(c.Q) * rho;
  c.L_Vf = 2.0 * c.alpha2_coeff * rho;
  c.validate();
  return c;
}

void CostSpec::validate() const {
  require(Q.rows() == Q.cols() && Q.rows() > 0, "Q must be square");
  require(R.rows() == R.cols() && R.rows() > 0, "R must be square");
  require(P_f.rows() == Q.rows() && P_f.cols() == Q.cols(), "P_f must match Q");
  require(is_symmetric(Q) && min_eigenvalue(Q) > 0.0, "Q must be symmetric positive definite");
  require(is_symmetric(R) && min_eigenvalue(R) > 0.0, "R must be symmetric positive definite");
  require(is_symmetric(P_f) && min_eigenvalue(P_f) > 0.0, "P_f must be symmetric positive definite");
  require(L_F > 0.0 && L_Vf > 0.0, "L_F and L_Vf must be positive");
  require(alpha1_coeff > 0.0 && alpha1_coeff <= min_eigenvalue(Q) * (1.0 + 1e-12),
          "alpha1_coeff must lie in (0, lambda_min(Q)]");
  require(alpha2_coeff >= max_eigenvalue(P_f) * (1.0 - 1e-12), "alpha2_coeff must be >= lambda_max(P_f)");
}

double stage_cost(const CostSpec& cost, const Vec& x, const Vec& u) {
  if (x.size() != cost.Q.rows() || u.size() != cost.R.rows()) throw DimensionError("stage_cost: dimension mismatch");
  return x.dot(cost.Q * x) + u.dot(cost.R * u);
}

double terminal_cost(const CostSpec& cost, const Vec& x) {
  if (x.size() != cost.P_f.rows()) throw DimensionError("terminal_cost: dimension mismatch");
  return x.dot(cost.P_f * x);
}

double ClassKBounds::alpha2_inv(double s) const { return std::sqrt(std::max(0.0, s) / a2); }

ClassKBounds class_k_bounds(const CostSpec& cost) { return {cost.alpha1_coeff, cost.alpha2_coeff}; }

// ---------------------------------------------------------------------------
// Terminal ingredients

TerminalSpec TerminalSpec::linear(Mat K, double eps_f, double eps) {
  TerminalSpec t;
  t.eps_f = eps_f;
  t.eps = eps;
  t.K_gain = K;
  t.law = [K](const Vec& x) -> Vec { return K * x; };
  t.law_jacobian = [K](const Vec&) -> Mat { return K; };
  t.law_name = "linear";
  t.validate();
  return t;
}

void TerminalSpec::validate() const {
  require(eps_f > 0.0, "eps_f must be positive");
  require(eps_f < eps, "terminal levels must satisfy eps_f < eps");
  require(static_cast<bool>(law), "terminal law missing");
}

Mat TerminalSpec::jacobian(const Vec& x) const {
  if (law_jacobian) return law_jacobian(x);
  const Vec u0 = law(x);
  Mat J(u0.size(), x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double d = 1e-6 * (1.0 + std::abs(x(i)));
    Vec xp = x, xm = x;
    xp(i) += d;
    xm(i) -= d;
    J.col(i) = (law(xp) - law(xm)) / (2.0 * d);
  }
  return J;
}

const char* to_string(SolverStatus s) {
  switch (s) {
    case SolverStatus::Converged: return "converged";
    case SolverStatus::MaxIter: return "max-iter";
    case SolverStatus::Infeasible: return "infeasible";
  }
  return "?";
}

void SolverParams::validate() const {
  require(num_segments > 0, "solver.segments must be positive");
  require(max_outer_iters > 0 && max_inner_iters > 0, "iteration limits must be positive");
  require(penalty_init > 0.0, "penalty_init must be positive");
  require(penalty_growth > 1.0, "penalty_growth must exceed 1");
  require(grad_tol > 0.0 && con_tol > 0.0, "solver tolerances must be positive");
  require(predict_step > 0.0, "prediction step must be positive");
}

// ---------------------------------------------------------------------------
// Projection onto the admissible node set

InputSetProjector::InputSetProjector(InputBounds bounds, double K_u, double spacing, int nodes, int m)
    : bounds_(std::move(bounds)), max_step_(K_u * spacing), nodes_(nodes), m_(m) {}

namespace {

void project_pairs(Vec& z, int first, int nodes, int m, double r) {
  for (int j = first; j + 1 < nodes; j += 2) {
    auto a = z.segment(j * m, m);
    auto b = z.segment((j + 1) * m, m);
    const Vec d = b - a;
    const double nd = d.norm();
    if (nd > r) {
      const Vec mid = 0.5 * (a + b);
      const Vec half = (0.5 * r / nd) * d;
      a = mid - half;
      b = mid + half;
    }
  }
}

}  // namespace

void InputSetProjector::project(Vec& z) const {
  const auto box = [&](Vec& v) {
    for (int j = 0; j < nodes_; ++j) {
      Vec u = v.segment(j * m_, m_);
      bounds_.project(u);
      v.segment(j * m_, m_) = u;
    }
  };
  if (nodes_ < 2) {
    box(z);
    return;
  }
  p_box_.setZero(z.size());
  p_even_.setZero(z.size());
  p_odd_.setZero(z.size());
  Vec y;
  const double scale = 1.0 + z.cwiseAbs().maxCoeff();
  for (int it = 0; it < 5000; ++it) {
    prev_ = z;
    y = z + p_box_;
    z = y;
    box(z);
    p_box_ = y - z;
    y = z + p_even_;
    z = y;
    project_pairs(z, 0, nodes_, m_, max_step_);
    p_even_ = y - z;
    y = z + p_odd_;
    z = y;
    project_pairs(z, 1, nodes_, m_, max_step_);
    p_odd_ = y - z;
    if ((z - prev_).cwiseAbs().maxCoeff() <= 1e-13 * scale && max_rate_violation(z) <= 1e-12 * (1.0 + max_step_)) break;
  }
  box(z);
}

double InputSetProjector::max_rate_violation(const Vec& z) const {
  double worst = 0.0;
  for (int j = 0; j + 1 < nodes_; ++j) {
    worst = std::max(worst, (z.segment((j + 1) * m_, m_) - z.segment(j * m_, m_)).norm() - max_step_);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Transcription

Transcription::Transcription(const PlantModel& model, const CostSpec& cost, Vec x0, double t0, double horizon,
                             int segments, double step)
    : model_(model), cost_(cost), x0_(std::move(x0)), t0_(t0), horizon_(horizon), segments_(segments) {
  require(horizon > 0.0, "prediction horizon must be positive");
  require(segments > 0, "need at least one control segment");
  if (x0_.size() != model.n) throw DimensionError("solve_ocp: initial state has wrong dimension");
  require(x0_.allFinite(), "solve_ocp: initial state is not finite");
  spacing_ = horizon / segments;
  steps_ = std::max(1, static_cast<int>(std::ceil(spacing_ / step - 1e-9)));
  h_ = spacing_ / steps_;
  xs_.assign(static_cast<std::size_t>(segments_ * steps_ + 1), Vec::Zero(model.n));
  ws_.resize(model);
  k1_.resize(model.n);
  k2_.resize(model.n);
  k3_.resize(model.n);
  k4_.resize(model.n);
  xt_.resize(model.n);
  ua_.resize(model.m);
  ub_.resize(model.m);
  uc_.resize(model.m);
  stage_.assign(3 * static_cast<std::size_t>(segments_ * steps_), Vec::Zero(model.n));
  qx_.resize(model.n);
  lam_.resize(model.n);
  lx_.resize(model.n);
  b1_.resize(model.n);
  b2_.resize(model.n);
  b3_.resize(model.n);
  b4_.resize(model.n);
  ru_.resize(model.m);
  gu_.resize(model.m);
}

std::vector<double> Transcription::node_times() const {
  std::vector<double> t(static_cast<std::size_t>(segments_ + 1));
  for (int j = 0; j <= segments_; ++j) t[static_cast<std::size_t>(j)] = t0_ + spacing_ * j;
  t.back() = t0_ + horizon_;
  return t;
}

void Transcription::input_at(const Vec& z, int seg, double w, Vec& u) const {
  const int m = model_.m;
  u.noalias() = (1.0 - w) * z.segment(seg * m, m) + w * z.segment((seg + 1) * m, m);
}

void Transcription::forward(const Vec& z) {
  const double h = h_;
  xs_[0] = x0_;
  int i = 0;
  for (int seg = 0; seg < segments_; ++seg) {
    for (int r = 0; r < steps_; ++r, ++i) {
      const std::size_t iu = static_cast<std::size_t>(i);
      const Vec& x = xs_[iu];
      input_at(z, seg, static_cast<double>(r) / steps_, ua_);
      input_at(z, seg, (r + 0.5) / steps_, ub_);
      input_at(z, seg, static_cast<double>(r + 1) / steps_, uc_);
      eval_dynamics_into(model_, x, ua_, k1_, ws_);
      stage_[3 * iu] = x + 0.5 * h * k1_;
      eval_dynamics_into(model_, stage_[3 * iu], ub_, k2_, ws_);
      stage_[3 * iu + 1] = x + 0.5 * h * k2_;
      eval_dynamics_into(model_, stage_[3 * iu + 1], ub_, k3_, ws_);
      stage_[3 * iu + 2] = x + h * k3_;
      eval_dynamics_into(model_, stage_[3 * iu + 2], uc_, k4_, ws_);
      Vec& xn = xs_[iu + 1];
      xn = x;
      xn += (h / 6.0) * k1_;
      xn += (h / 3.0) * k2_;
      xn += (h / 3.0) * k3_;
      xn += (h / 6.0) * k4_;
    }
  }
}

double Transcription::evaluate(const Vec& z, double* vf_end, Vec* grad,
                               const std::function<double(double)>& terminal_weight) {
  forward(z);
  const int total = segments_ * steps_;
  const int m = model_.m;
  const double h = h_;

  auto grid_weight = [&](int i) { return (i == 0 || i == total) ? 0.5 * h : h; };
  auto grid_input = [&](int i, Vec& u, int& seg, double& w) {
    seg = std::min(i / steps_, segments_ - 1);
    w = static_cast<double>(i - seg * steps_) / steps_;
    input_at(z, seg, w, u);
  };

  double J = 0.0;
  int seg;
  double w;
  for (int i = 0; i <= total; ++i) {
    grid_input(i, ua_, seg, w);
    const Vec& x = xs_[static_cast<std::size_t>(i)];
    qx_.noalias() = cost_.Q * x;
    ru_.noalias() = cost_.R * ua_;
    J += grid_weight(i) * (x.dot(qx_) + ua_.dot(ru_));
  }
  const Vec& xN = xs_.back();
  qx_.noalias() = cost_.P_f * xN;
  const double vf = xN.dot(qx_);
  J += vf;
  if (vf_end) *vf_end = vf;
  if (!std::isfinite(J)) J = std::numeric_limits<double>::infinity();
  if (!grad) return J;

  Vec& g = *grad;
  g.setZero(num_vars());
  const double tw = 1.0 + (terminal_weight ? terminal_weight(vf) : 0.0);
  auto add_node_grad = [&](int sg, double wt, const Vec& gu) {
    g.segment(sg * m, m) += (1.0 - wt) * gu;
    g.segment((sg + 1) * m, m) += wt * gu;
  };

  Vec& lam = lam_;
  lam = (2.0 * tw) * qx_;
  {
    grid_input(total, ua_, seg, w);
    qx_.noalias() = cost_.Q * xN;
    lam += (grid_weight(total) * 2.0) * qx_;
    ru_.noalias() = cost_.R * ua_;
    gu_ = (grid_weight(total) * 2.0) * ru_;
    add_node_grad(seg, w, gu_);
  }

  for (int i = total - 1; i >= 0; --i) {
    const std::size_t iu = static_cast<std::size_t>(i);
    const int sg = i / steps_;
    const int r = i - sg * steps_;
    const double wa = static_cast<double>(r) / steps_, wb = (r + 0.5) / steps_, wc = static_cast<double>(r + 1) / steps_;
    const Vec& x = xs_[iu];
    input_at(z, sg, wa, ua_);
    input_at(z, sg, wb, ub_);
    input_at(z, sg, wc, uc_);

    // b4..b1 are the adjoints of the four stage derivatives.
    b4_ = (h / 6.0) * lam;
    model_.state_jacobian(stage_[3 * iu + 2], uc_, jac_);
    model_.input_matrix(stage_[3 * iu + 2], g_);
    lx_ = lam;
    lx_.noalias() += jac_.transpose() * b4_;
    gu_.noalias() = g_.transpose() * b4_;
    add_node_grad(sg, wc, gu_);

    b3_ = (h / 3.0) * lam;
    b3_.noalias() += h * (jac_.transpose() * b4_);
    model_.state_jacobian(stage_[3 * iu + 1], ub_, jac_);
    model_.input_matrix(stage_[3 * iu + 1], g_);
    lx_.noalias() += jac_.transpose() * b3_;
    gu_.noalias() = g_.transpose() * b3_;

    b2_ = (h / 3.0) * lam;
    b2_.noalias() += (0.5 * h) * (jac_.transpose() * b3_);
    model_.state_jacobian(stage_[3 * iu], ub_, jac_);
    model_.input_matrix(stage_[3 * iu], g_);
    lx_.noalias() += jac_.transpose() * b2_;
    gu_.noalias() += g_.transpose() * b2_;
    add_node_grad(sg, wb, gu_);

    b1_ = (h / 6.0) * lam;
    b1_.noalias() += (0.5 * h) * (jac_.transpose() * b2_);
    model_.state_jacobian(x, ua_, jac_);
    model_.input_matrix(x, g_);
    lx_.noalias() += jac_.transpose() * b1_;
    gu_.noalias() = g_.transpose() * b1_;

    // stage cost at grid point i (uses the input value at the start of step i)
    qx_.noalias() = cost_.Q * x;
    lx_ += (grid_weight(i) * 2.0) * qx_;
    ru_.noalias() = cost_.R * ua_;
    gu_ += (grid_weight(i) * 2.0) * ru_;
    add_node_grad(sg, wa, gu_);
    lam.swap(lx_);
  }
  return J;
}

OcpSolution Transcription::make_solution(const Vec& z) {
  double vf = 0.0;
  const double J = evaluate(z, &vf, nullptr);
  const int total = segments_ * steps_;
  const int m = model_.m;
  OcpSolution sol;
  sol.origin_time = t0_;
  sol.horizon = horizon_;
  std::vector<Vec> nodes;
  for (int j = 0; j <= segments_; ++j) nodes.push_back(z.segment(j * m, m));
  sol.control = ControlSignal::piecewise_linear(node_times(), std::move(nodes));
  sol.state_traj.t.resize(static_cast<std::size_t>(total + 1));
  sol.state_traj.x = xs_;
  sol.state_traj.u.resize(static_cast<std::size_t>(total + 1));
  sol.stage_integrand.resize(static_cast<std::size_t>(total + 1));
  for (int i = 0; i <= total; ++i) {
    const int seg = std::min(i / steps_, segments_ - 1);
    const int r = i - seg * steps_;
    const double w = static_cast<double>(r) / steps_;
    Vec u;
    input_at(z, seg, w, u);
    const auto idx = static_cast<std::size_t>(i);
    sol.state_traj.t[idx] = (i == total) ? t0_ + horizon_ : t0_ + seg * spacing_ + r * h_;
    sol.stage_integrand[idx] = stage_cost(cost_, xs_[idx], u);
    sol.state_traj.u[idx] = std::move(u);
  }
  sol.J_star = J;
  sol.terminal_value = vf;
  return sol;
}

// ---------------------------------------------------------------------------
// Spectral projected gradient on the augmented Lagrangian

namespace {

struct SpgResult {
  int iterations = 0;
  double pg_norm = 0.0;
  bool converged = false;
};

template <class Fn>
SpgResult spg_minimize(Fn&& fn, const InputSetProjector& proj, Vec& z, int max_iter, double tol) {
  SpgResult res;
  proj.project(z);
  Vec g(z.size()), gt(z.size()), zt, d, pg;
  double f = fn(z, g);
  std::deque<double> history{f};
  constexpr std::size_t kMemory = 10;
  constexpr double kGamma = 1e-4;

  pg = z - g;
  proj.project(pg);
  pg -= z;
  double alpha = 1.0 / std::max(1e-12, pg.cwiseAbs().maxCoeff());

  for (int it = 0; it < max_iter; ++it) {
    res.iterations = it + 1;
    res.pg_norm = pg.cwiseAbs().maxCoeff();
    if (res.pg_norm <= tol) {
      res.converged = true;
      break;
    }
    d = z - alpha * g;
    proj.project(d);
    d -= z;
    const double gd = g.dot(d);
    if (!(gd < 0.0)) {
      alpha = 1.0 / std::max(1e-12, res.pg_norm);
      d = pg;
      if (!(g.dot(d) < 0.0)) break;
    }
    const double slope = g.dot(d);
    const double fmax = *std::max_element(history.begin(), history.end());
    double lam = 1.0;
    double ft = 0.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      zt = z + lam * d;
      ft = fn(zt, gt);
      if (ft <= fmax + kGamma * lam * slope) {
        accepted = true;
        break;
      }
      const double denom = ft - f - lam * slope;
      double lt = (std::isfinite(denom) && denom > 0.0) ? -0.5 * lam * lam * slope / denom : 0.5 * lam;
      if (!(lt >= 0.1 * lam && lt <= 0.9 * lam)) lt = 0.5 * lam;
      lam = lt;
    }
    if (!accepted) break;
    const Vec s = zt - z;
    const Vec y = gt - g;
    const double sy = s.dot(y);
    alpha = sy > 0.0 ? std::clamp(s.squaredNorm() / sy, 1e-30, 1e30) : 1e30;
    z = zt;
    g = gt;
    f = ft;
    history.push_back(f);
    if (history.size() > kMemory) history.pop_front();
    pg = z - g;
    proj.project(pg);
    pg -= z;
  }
  res.pg_norm = pg.cwiseAbs().maxCoeff();
  return res;
}

}  // namespace

Vec shifted_candidate(const PlantModel& model, const TerminalSpec& term, const OcpSolution& previous, double t0,
                      double T_p, int segments, double step) {
  const int m = model.m;
  const double spacing = T_p / segments;
  const double prev_end = previous.origin_time + previous.horizon;
  Vec z(static_cast<Eigen::Index>(segments + 1) * m);

  const auto saturated_law = [&](const Vec& x) {
    Vec u = term.law(x);
    model.bounds.project(u);
    return u;
  };

  std::optional<Trajectory> tail;
  const double last = t0 + T_p;
  if (last > prev_end + 1e-12) {
    const auto sig = ControlSignal::feedback(saturated_law, prev_end, last);
    tail = integrate(model, previous.state_traj.back(), sig, prev_end, last, step);
  }
  for (int j = 0; j <= segments; ++j) {
    const double t = (j == segments) ? last : t0 + spacing * j;
    Vec u;
    if (t <= prev_end + 1e-12 && t >= previous.origin_time - 1e-12) {
      u = previous.control.at(std::min(t, prev_end));
    } else if (tail) {
      const auto it = std::lower_bound(tail->t.begin(), tail->t.end(), t - 1e-12);
      const std::size_t idx = std::min<std::size_t>(static_cast<std::size_t>(it - tail->t.begin()), tail->t.size() - 1);
      u = saturated_law(tail->x[idx]);
    } else {
      u = Vec::Zero(m);
    }
    z.segment(j * m, m) = u;
  }
  return z;
}

OcpSolution solve_ocp(const PlantModel& model, const CostSpec& cost, const TerminalSpec& term, const Vec& x0,
                      double T_p, const SolverParams& params, double t0) {
  params.validate();
  term.validate();
  Transcription tr(model, cost, x0, t0, T_p, params.num_segments, params.predict_step);
  const InputSetProjector proj(model.bounds, model.K_u, tr.node_spacing(), params.num_segments + 1, model.m);

  Vec z = Vec::Zero(tr.num_vars());
  std::optional<double> candidate_cost;
  bool candidate_feasible = false;
  if (params.warm_start) {
    z = shifted_candidate(model, term, *params.warm_start, t0, T_p, params.num_segments, params.predict_step);
  }
  proj.project(z);

  double vf = 0.0;
  double J = tr.evaluate(z, &vf, nullptr);
  if (params.warm_start) {
    candidate_cost = J;
    candidate_feasible = vf <= term.eps_f + params.con_tol;
  }

  Vec best_z;
  double best_J = std::numeric_limits<double>::infinity();
  double least_violation = std::numeric_limits<double>::infinity();
  Vec least_violation_z = z;
  const auto consider = [&](const Vec& cand, double Jc, double vfc) {
    const double viol = std::max(0.0, vfc - term.eps_f);
    if (viol <= params.con_tol && Jc < best_J) {
      best_J = Jc;
      best_z = cand;
    }
    if (viol < least_violation) {
      least_violation = viol;
      least_violation_z = cand;
    }
  };
  consider(z, J, vf);

  double multiplier = 0.0;
  double mu = params.penalty_init;
  double prev_viol = std::numeric_limits<double>::infinity();
  SolverStatus status = SolverStatus::MaxIter;
  int outer = 0, inner_total = 0;
  double pg_norm = 0.0;

  for (outer = 1; outer <= params.max_outer_iters; ++outer) {
    const double lam0 = multiplier, mu0 = mu, epsf = term.eps_f;
    auto al = [&](const Vec& zz, Vec& g) {
      double v = 0.0;
      const auto tw = [&](double vfz) { return std::max(0.0, lam0 + mu0 * (vfz - epsf)); };
      const double Jz = tr.evaluate(zz, &v, &g, tw);
      const double s = std::max(0.0, lam0 + mu0 * (v - epsf));
      return Jz + (s * s - lam0 * lam0) / (2.0 * mu0);
    };
    const SpgResult r = spg_minimize(al, proj, z, params.max_inner_iters, params.grad_tol);
    inner_total += r.iterations;
    pg_norm = r.pg_norm;
    J = tr.evaluate(z, &vf, nullptr);
    consider(z, J, vf);
    const double c = vf - term.eps_f;
    const double viol = std::max(0.0, c);
    if (params.log) {
      *params.log << "ocp outer=" << outer << " objective=" << J << " violation=" << viol << " penalty=" << mu
                  << " inner=" << r.iterations << " pg=" << r.pg_norm << '\n';
    }
    if (viol <= params.con_tol && r.converged) {
      status = SolverStatus::Converged;
      break;
    }
    multiplier = std::max(0.0, multiplier + mu * c);
    if (viol > params.con_tol && viol > 0.25 * prev_viol) mu *= params.penalty_growth;
    prev_viol = viol;
    if (mu > params.penalty_max && viol > params.con_tol) {
      status = SolverStatus::Infeasible;
      break;
    }
  }
  if (outer > params.max_outer_iters) outer = params.max_outer_iters;

  const bool have_feasible = best_J < std::numeric_limits<double>::infinity();
  if (status == SolverStatus::Infeasible && have_feasible) status = SolverStatus::MaxIter;
  OcpSolution sol = tr.make_solution(have_feasible ? best_z : least_violation_z);
  sol.status = status;
  sol.outer_iterations = outer;
  sol.inner_iterations = inner_total;
  sol.projected_gradient = pg_norm;
  sol.candidate_cost = candidate_cost;
  sol.candidate_feasible = candidate_feasible;
  return sol;
}

Vec predict_state(const PlantModel& model, const OcpSolution& sol, double t) {
  const auto& grid = sol.state_traj.t;
  require(t >= grid.front() - 1e-12 && t <= grid.back() + 1e-12, "predict_state: time outside the horizon");
  auto it = std::upper_bound(grid.begin(), grid.end(), t);
  std::size_t i = it == grid.begin() ? 0 : static_cast<std::size_t>(it - grid.begin()) - 1;
  if (i >= grid.size() - 1) return sol.state_traj.x.back();
  const double h = t - grid[i];
  if (h <= 0.0) return sol.state_traj.x[i];
  // the partial step stays inside one control segment
  const double mid = 0.5 * (grid[i] + grid[i + 1]);
  const std::size_t piece = sol.control.piece_at(mid);
  const Vec& x = sol.state_traj.x[i];
  DynamicsWorkspace ws;
  ws.resize(model);
  Vec ua, ub, uc, k1(model.n), k2(model.n), k3(model.n), k4(model.n);
  sol.control.evaluate(piece, grid[i], x, ua);
  sol.control.evaluate(piece, grid[i] + 0.5 * h, x, ub);
  sol.control.evaluate(piece, t, x, uc);
  eval_dynamics_into(model, x, ua, k1, ws);
  eval_dynamics_into(model, x + 0.5 * h * k1, ub, k2, ws);
  eval_dynamics_into(model, x + 0.5 * h * k2, ub, k3, ws);
  eval_dynamics_into(model, x + h * k3, uc, k4, ws);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

// ---------------------------------------------------------------------------
// Offline checks of the terminal ingredients

std::vector<Vec> sample_sublevel_set(const Mat& P, double level, int count, std::uint64_t seed) {
  const Eigen::Index n = P.rows();
  const Eigen::LLT<Mat> llt(P);
  require(llt.info() == Eigen::Success, "sublevel sampling needs a positive definite matrix");
  const Mat Lt = llt.matrixU();  // P = Lt' Lt
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<Vec> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    Vec y(n);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = normal(rng);
    const double radius = std::sqrt(level) * std::pow(unif(rng), 1.0 / static_cast<double>(n));
    y *= radius / std::max(1e-300, y.norm());
    out.push_back(Lt.triangularView<Eigen::Upper>().solve(y));
  }
  return out;
}

Assumption2Report verify_assumption2(const PlantModel& model, const CostSpec& cost, const TerminalSpec& term,
                                     int sample_count, std::uint64_t seed, double tol) {
  require(sample_count >= 1, "verify_assumption2 needs at least one sample");
  Assumption2Report rep;
  rep.worst_margin = -std::numeric_limits<double>::infinity();
  auto check = [&](const Vec& x) {
    const Vec u = term.law(x);
    const Vec dx = eval_dynamics(model, x, u);
    const double margin = 2.0 * x.dot(cost.P_f * dx) + stage_cost(cost, x, u);
    rep.worst_margin = std::max(rep.worst_margin, margin);
    if (margin > tol * (1.0 + x.squaredNorm())) rep.violations.push_back(x);
    if (!model.bounds.contains(u, 1e-12)) rep.inadmissible.push_back(x);
    ++rep.samples;
  };
  for (const Vec& x : sample_sublevel_set(cost.P_f, term.eps, sample_count, seed)) check(x);
  return rep;
}

double required_Ku(const PlantModel& model, const CostSpec& cost, const TerminalSpec& term, int sample_count,
                   std::uint64_t seed) {
  require(sample_count >= 1, "required_Ku needs at least one sample");
  double worst = 0.0;
  for (const Vec& x : sample_sublevel_set(cost.P_f, term.eps_f, sample_count, seed)) {
    const Vec u = term.law(x);
    worst = std::max(worst, (term.jacobian(x) * eval_dynamics(model, x, u)).norm());
  }
  return worst;
}

}  // namespace stmpc
