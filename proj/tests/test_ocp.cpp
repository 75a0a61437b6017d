#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace stmpc;

namespace {

Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<int>(v.size()));
  int i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

/// Integral of F along the kappa closed loop over [0, T] plus V_f at the end.
double kappa_rollout_cost(const Scenario& sc, const Vec& x0, double T) {
  const auto sig = ControlSignal::feedback(sc.term.law, 0.0, T);
  const Trajectory tr = integrate(sc.model, x0, sig, 0.0, T, 1e-3);
  double J = 0.0;
  for (std::size_t i = 0; i + 1 < tr.size(); ++i) {
    const double f0 = stage_cost(sc.cost, tr.x[i], sc.term.law(tr.x[i]));
    const double f1 = stage_cost(sc.cost, tr.x[i + 1], sc.term.law(tr.x[i + 1]));
    J += 0.5 * (tr.t[i + 1] - tr.t[i]) * (f0 + f1);
  }
  return J + terminal_cost(sc.cost, tr.back());
}

}  // namespace

TEST_CASE("stage and terminal costs") {
  const Scenario pend = test::shipped("pendulum");
  const Scenario uni = test::shipped("unicycle");
  CHECK(stage_cost(pend.cost, Vec::Zero(4), Vec::Zero(1)) == 0.0);
  CHECK(stage_cost(pend.cost, vec({1, 0, 0, 0}), Vec::Zero(1)) == doctest::Approx(3.0));
  CHECK(stage_cost(uni.cost, vec({1, 1, 0}), vec({1, 0})) == doctest::Approx(0.25));
  CHECK(terminal_cost(pend.cost, Vec::Zero(4)) == 0.0);
  CHECK(terminal_cost(pend.cost, vec({1, 0, 0, 0})) == doctest::Approx(21.0));
  const double pi = std::numbers::pi;
  CHECK(terminal_cost(uni.cost, vec({-5, 4, -pi / 2})) == doctest::Approx(25 + 16 + pi * pi / 4));
}

TEST_CASE("class-K bounds") {
  const Scenario pend = test::shipped("pendulum");
  const ClassKBounds k = class_k_bounds(pend.cost);
  CHECK(k.a1 == doctest::Approx(3.0));
  CHECK(k.a2 == doctest::Approx(max_eigenvalue(pend.cost.P_f)));
  CHECK(k.alpha2(k.alpha2_inv(0.7)) == doctest::Approx(0.7));

  std::mt19937_64 rng(21);
  for (const Scenario* sc : {&pend}) {
    for (int i = 0; i < 1000; ++i) {
      const Vec x = test::random_vec(rng, sc->model.n, 3.0);
      const Vec u = test::random_vec(rng, sc->model.m, 3.0);
      CHECK(k.alpha1(x.norm()) <= stage_cost(sc->cost, x, u) * (1 + 1e-12));
      CHECK(terminal_cost(sc->cost, x) <= k.alpha2(x.norm()) * (1 + 1e-12));
    }
  }
}

TEST_CASE("input-set projection is feasible, idempotent and a true projection") {
  std::mt19937_64 rng(3);
  Vec hw(2);
  hw << 1.5, 0.5;
  for (const InputBounds& b : {InputBounds::ball(8.5), InputBounds::box(hw)}) {
    const int m = b.kind == InputBounds::Kind::Ball ? 1 : 2;
    const int nodes = 12;
    const InputSetProjector proj(b, 2.0, 0.25, nodes, m);
    for (int trial = 0; trial < 30; ++trial) {
      Vec z = test::random_vec(rng, nodes * m, 12.0);
      const Vec orig = z;
      proj.project(z);
      CHECK(proj.max_rate_violation(z) <= 1e-9);
      for (int j = 0; j < nodes; ++j) CHECK(b.contains(z.segment(j * m, m), 1e-9));
      Vec again = z;
      proj.project(again);
      CHECK((again - z).norm() <= 1e-8);
      // variational inequality against random feasible points
      for (int k = 0; k < 10; ++k) {
        Vec y = test::random_vec(rng, nodes * m, 12.0);
        proj.project(y);
        CHECK((orig - z).dot(y - z) <= 1e-6 * (1 + (orig - z).norm() * (y - z).norm()));
      }
    }
  }
}

TEST_CASE("adjoint gradient matches central differences") {
  std::mt19937_64 rng(11);
  const Scenario scs[] = {test::shipped("pendulum"), test::shipped("unicycle")};
  int checked = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const Scenario& sc = scs[trial % 2];
    std::uniform_int_distribution<int> segs(2, 8);
    std::uniform_real_distribution<double> hor(0.3, 2.0);
    const Vec x0 = test::random_vec(rng, sc.model.n, 1.0);
    Transcription tr(sc.model, sc.cost, x0, 0.0, hor(rng), segs(rng), 1e-2);
    const Vec z = test::random_vec(rng, tr.num_vars(), 1.0);
    double vf = 0.0;
    Vec g;
    tr.evaluate(z, &vf, &g);
    for (int i = 0; i < z.size(); ++i) {
      const double h = 1e-6 * (1 + std::abs(z[i]));
      Vec zp = z, zm = z;
      zp[i] += h;
      zm[i] -= h;
      const double fd = (tr.evaluate(zp, nullptr, nullptr) - tr.evaluate(zm, nullptr, nullptr)) / (2 * h);
      CHECK(std::abs(fd - g[i]) <= 1e-4 * std::max(1.0, std::abs(fd)));
    }
    ++checked;
  }
  CHECK(checked == 50);
}

TEST_CASE("terminal-weighted gradient adds the weighted V_f gradient") {
  const Scenario sc = test::shipped("unicycle");
  Transcription tr(sc.model, sc.cost, sc.x0, 0.0, 1.0, 4, 1e-2);
  std::mt19937_64 rng(2);
  const Vec z = test::random_vec(rng, tr.num_vars(), 1.0);
  Vec g0, g1;
  double vf;
  tr.evaluate(z, &vf, &g0);
  tr.evaluate(z, &vf, &g1, [](double) { return 2.5; });
  for (int i = 0; i < z.size(); ++i) {
    Vec zp = z, zm = z;
    zp[i] += 1e-6;
    zm[i] -= 1e-6;
    double vp, vm;
    tr.evaluate(zp, &vp, nullptr);
    tr.evaluate(zm, &vm, nullptr);
    CHECK((g1[i] - g0[i]) == doctest::Approx(2.5 * (vp - vm) / 2e-6).epsilon(1e-5).scale(1.0));
  }
}

TEST_CASE("unicycle OCP from the published start") {
  const Scenario sc = test::shipped("unicycle");
  const OcpSolution sol = solve_ocp(sc.model, sc.cost, sc.term, sc.x0, sc.T_p, sc.solver);
  CHECK(sol.status == SolverStatus::Converged);
  CHECK(sol.feasible(sc.term.eps_f, sc.solver.con_tol));
  CHECK_NOTHROW(sol.control.check_admissible(sc.model.bounds, sc.model.K_u, 1e-9));

  // J_star is reproducible from the returned trajectories
  double J = 0.0;
  const auto& t = sol.state_traj.t;
  for (std::size_t i = 0; i + 1 < t.size(); ++i) J += 0.5 * (t[i + 1] - t[i]) * (sol.stage_integrand[i] + sol.stage_integrand[i + 1]);
  J += terminal_cost(sc.cost, sol.state_traj.back());
  CHECK(J == doctest::Approx(sol.J_star).epsilon(1e-10));
  CHECK(stage_integral(sol, 0.0, sc.T_p) + sol.terminal_value == doctest::Approx(sol.J_star).epsilon(1e-10));

  // the predicted trajectory is the plant response to the returned input
  const Trajectory replay = integrate(sc.model, sc.x0, sol.control, 0.0, sc.T_p, 1e-3);
  CHECK((replay.back() - sol.state_traj.back()).norm() < 1e-4);
}

TEST_CASE("solution from inside the terminal region beats the kappa rollout") {
  Scenario sc = test::shipped("unicycle");
  const Vec x0 = vec({0.2, -0.3, 0.1});
  REQUIRE(terminal_cost(sc.cost, x0) < sc.term.eps_f);
  const OcpSolution sol = solve_ocp(sc.model, sc.cost, sc.term, x0, sc.T_p, sc.solver);
  CHECK(sol.feasible(sc.term.eps_f, sc.solver.con_tol));
  CHECK(sol.J_star <= kappa_rollout_cost(sc, x0, sc.T_p) * (1 + 1e-3));
}

TEST_CASE("a longer horizon does not cost more") {
  const Scenario sc = test::shipped("unicycle");
  const Vec x0 = vec({-1.5, 1.0, -0.5});
  SolverParams sp = sc.solver;
  sp.num_segments = 28;
  const OcpSolution s7 = solve_ocp(sc.model, sc.cost, sc.term, x0, 7.0, sp);
  sp.num_segments = 14;
  const OcpSolution s35 = solve_ocp(sc.model, sc.cost, sc.term, x0, 3.5, sp);
  REQUIRE(s35.feasible(sc.term.eps_f, sp.con_tol));
  CHECK(s7.J_star <= s35.J_star + sc.term.eps_f);
}

TEST_CASE("warm start candidate is reported") {
  const Scenario sc = test::shipped("unicycle");
  const OcpSolution s0 = solve_ocp(sc.model, sc.cost, sc.term, sc.x0, sc.T_p, sc.solver);
  const Vec x1 = predict_state(sc.model, s0, 0.2);
  SolverParams sp = sc.solver;
  sp.warm_start = s0;
  const OcpSolution s1 = solve_ocp(sc.model, sc.cost, sc.term, x1, sc.T_p, sp, 0.2);
  REQUIRE(s1.candidate_cost.has_value());
  CHECK(s1.J_star <= *s1.candidate_cost + 1e-9);
  CHECK(s1.J_star < s0.J_star);
  CHECK(s1.origin_time == 0.2);
}

TEST_CASE("published pendulum start is beyond the reach of the input bound") {
  // Along the left eigenvector w of the unstable eigenvalue lambda,
  // d/dt (w'x) = lambda w'x + w'B u, so reaching the origin needs
  // |u| >= lambda |w'x0| / |w'B| for some time.
  const Scenario sc = test::shipped("pendulum");
  const Mat A = pendulum_A(0.55, 15, 9, 9.81);
  const Mat B = pendulum_B(15, 9);
  Eigen::EigenSolver<Mat> es(A.transpose());
  int k = 0;
  for (int i = 1; i < 4; ++i)
    if (es.eigenvalues()[i].real() > es.eigenvalues()[k].real()) k = i;
  const double lambda = es.eigenvalues()[k].real();
  const Vec w = es.eigenvectors().col(k).real();
  const double needed = lambda * std::abs(w.dot(sc.x0)) / std::abs(w.dot(B.col(0)));
  CHECK(needed > sc.model.bounds.radius);

  const OcpSolution sol = solve_ocp(sc.model, sc.cost, sc.term, sc.x0, sc.T_p, sc.solver);
  CHECK(sol.status == SolverStatus::Infeasible);
  CHECK_FALSE(sol.feasible(sc.term.eps_f, sc.solver.con_tol));
}

TEST_CASE("terminal decrease check") {
  const Scenario uni = test::shipped("unicycle");
  const Scenario pend = test::shipped("pendulum");
  CHECK(assumption2_margin(pend.model, pend.cost, pend.term, Vec::Zero(4)) == doctest::Approx(0.0).scale(1e-6));

  Scenario lin = pend;
  lin.term = TerminalSpec::linear(-*pend.term.K_gain, pend.term.eps_f, pend.term.eps);
  const auto flipped = verify_assumption2(lin.model, lin.cost, lin.term, 500);
  CHECK_FALSE(flipped.ok());
  CHECK(required_Ku(uni.model, uni.cost, uni.term, 200) >= 0.0);
}

TEST_CASE("required input rate shrinks with the terminal level") {
  const Scenario pend = test::shipped("pendulum");
  TerminalSpec small = pend.term;
  small.eps_f = 1e-8;
  small.eps = 2e-8;
  const double big = required_Ku(pend.model, pend.cost, pend.term, 500);
  const double tiny = required_Ku(pend.model, pend.cost, small, 500);
  CHECK(tiny < 1e-3 * big);
  // linear law: the integrand is |K (A + B K) x|, maximized on the boundary
  const Mat K = *pend.term.K_gain;
  const Mat Acl = pendulum_A(0.55, 15, 9, 9.81) + pendulum_B(15, 9) * K;
  const Mat M = K * Acl;
  // max of |M x| over x'P x = eps_f is sqrt(eps_f * lambda_max(P^-1/2 M'M P^-1/2))
  Eigen::SelfAdjointEigenSolver<Mat> es(pend.cost.P_f);
  const Mat Pinvh = es.operatorInverseSqrt();
  const double bound = std::sqrt(pend.term.eps_f * max_eigenvalue(Pinvh * M.transpose() * M * Pinvh));
  CHECK(big <= bound * (1 + 1e-9));
  CHECK(big >= 0.5 * bound);
}
