#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace stmpc;

namespace {

Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<int>(v.size()));
  int i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

/// Pendulum with LQR-derived terminal ingredients, which satisfy the terminal
/// decrease condition by construction.
Scenario lqr_pendulum() {
  return parse_scenario_text(R"(
[scenario]
name = pendulum-lqr
[plant]
kind = pendulum
m = 0.55
M = 15
l = 9
u_max = 8.5
K_u = 2.0
[cost]
Q = diag(3 3 3 3)
R = 1.5
rho = 1.005
[terminal]
law = lqr
margin = 1.1
eps = 3
eps_f = 1.5
[trigger]
sigma = 0.99
N = 1
[sim]
x0 = 0.1 0 0.01 0
T_p = 14
)");
}

}  // namespace

TEST_CASE("terminal region membership") {
  const Scenario pend = test::shipped("pendulum");
  const Scenario uni = test::shipped("unicycle");
  CHECK(in_region(Vec::Zero(4), pend.cost, 0.43));
  CHECK(in_region(Vec::Zero(3), uni.cost, 1e-12));
  const Vec e = vec({0.3, -0.1, 0.02, 0.01});
  const Vec on = e * std::sqrt(0.44 / terminal_cost(pend.cost, e));
  CHECK_FALSE(in_region(on, pend.cost, 0.43));
  const Vec chi = vec({0.5, 0.5, 0.1});
  CHECK(terminal_cost(uni.cost, chi) == doctest::Approx(0.51));
  CHECK(in_region(chi, uni.cost, 0.8));
}

TEST_CASE("published pendulum local law") {
  const Scenario pend = test::shipped("pendulum");
  CHECK(local_control(Vec::Zero(4), pend.term, pend.cost, pend.model.bounds).norm() == 0.0);
  const Vec x = vec({0, 0, 0.01, 0});
  CHECK(pend.term.law(x)[0] == doctest::Approx(-2.281).epsilon(1e-12));
  // this point lies outside Omega(0.43) of the published P_f
  CHECK(terminal_cost(pend.cost, x) > pend.term.eps);
  CHECK_THROWS_AS(local_control(x, pend.term, pend.cost, pend.model.bounds), std::invalid_argument);
}

TEST_CASE("inadmissible local input is reported") {
  const Scenario sc = lqr_pendulum();
  const InputBounds tight = InputBounds::ball(1e-3);
  std::mt19937_64 rng(3);
  const Vec x = test::random_in_level(rng, sc.cost.P_f, sc.term.eps);
  const Vec xb = x * std::sqrt(0.9 * sc.term.eps / terminal_cost(sc.cost, x));
  CHECK_THROWS_AS(local_control(xb, sc.term, sc.cost, tight), AdmissibilityError);
}

TEST_CASE("LQR terminal ingredients") {
  const Scenario sc = lqr_pendulum();
  const Mat A = pendulum_A(0.55, 15, 9, 9.81), B = pendulum_B(15, 9);
  const Mat P = sc.cost.P_f / 1.1;
  const Mat res = A.transpose() * P + P * A - P * B * sc.cost.R.inverse() * B.transpose() * P + sc.cost.Q;
  CHECK(res.cwiseAbs().maxCoeff() <= 1e-9 * P.cwiseAbs().maxCoeff());
  for (double ev : eigenvalues_real(A + B * *sc.term.K_gain)) CHECK(ev < 0.0);
  CHECK(admissible_level(*sc.term.K_gain, sc.cost.P_f, 8.5) >= sc.term.eps);

  const auto rep = verify_assumption2(sc.model, sc.cost, sc.term, 10000);
  CHECK(rep.ok());
  CHECK(rep.worst_margin <= 0.0);
  CHECK(required_Ku(sc.model, sc.cost, sc.term, 2000) <= 2.0);

  TerminalSpec flipped = TerminalSpec::linear(-*sc.term.K_gain, sc.term.eps_f, sc.term.eps);
  CHECK_FALSE(verify_assumption2(sc.model, sc.cost, flipped, 2000).ok());
}

TEST_CASE("published pendulum terminal pair fails the decrease condition") {
  const Scenario pend = test::shipped("pendulum");
  const Mat Acl = pendulum_A(0.55, 15, 9, 9.81) + pendulum_B(15, 9) * *pend.term.K_gain;
  double worst = -1e300;
  for (double ev : eigenvalues_real(Acl)) worst = std::max(worst, ev);
  CHECK(worst > 0.0);
  CHECK_FALSE(verify_assumption2(pend.model, pend.cost, pend.term, 2000).ok());
}

TEST_CASE("local law drives V_f down") {
  const Scenario sc = lqr_pendulum();
  std::mt19937_64 rng(44);
  for (int trial = 0; trial < 100; ++trial) {
    const Vec x0 = test::random_in_level(rng, sc.cost.P_f, sc.term.eps);
    const auto sig = ControlSignal::feedback(
        [&](const Vec& x) { return local_control(x, sc.term, sc.cost, sc.model.bounds); }, 0.0, 80.0);
    const Trajectory tr = integrate(sc.model, x0, sig, 0.0, 80.0, 0.02);
    double prev = terminal_cost(sc.cost, tr.x.front());
    bool monotone = true;
    for (const Vec& x : tr.x) {
      const double v = terminal_cost(sc.cost, x);
      monotone = monotone && v <= prev + 1e-12;
      prev = v;
    }
    CHECK(monotone);
    CHECK(prev <= 1e-6);
  }
}

TEST_CASE("sampled local control") {
  const Scenario sc = lqr_pendulum();
  DualModeConfig cfg;
  cfg.mode = DualModeConfig::Mode::Sampled;
  cfg.delta_l = 0.01;
  std::mt19937_64 rng(45);
  auto decreases = [&](const DualModeConfig& c, const Vec& x0, int holds) {
    Vec x = x0;
    for (int i = 0; i < holds; ++i) {
      const auto [u, hold] = sampled_local_step(x, c, sc.term, sc.cost, sc.model.bounds);
      CHECK(hold == c.delta_l);
      const Trajectory tr = integrate(sc.model, x, ControlSignal::zero_order_hold({0.0}, {u}, hold), 0.0, hold, 1e-3);
      if (!(terminal_cost(sc.cost, tr.back()) < terminal_cost(sc.cost, x))) return false;
      x = tr.back();
    }
    return true;
  };
  for (int trial = 0; trial < 100; ++trial) CHECK(decreases(cfg, test::random_in_level(rng, sc.cost.P_f, sc.term.eps), 20));

  DualModeConfig coarse = cfg;
  coarse.delta_l = 10.0;
  int failures = 0;
  for (int trial = 0; trial < 100; ++trial)
    if (!decreases(coarse, test::random_in_level(rng, sc.cost.P_f, sc.term.eps), 1)) ++failures;
  CHECK(failures > 0);

  DualModeConfig bad;
  bad.delta_l = 0.0;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("unicycle polar law") {
  const Scenario uni = test::shipped("unicycle");
  CHECK(uni.term.law_name == "unicycle-polar");
  CHECK(uni.term.law(Vec::Zero(3)).norm() == 0.0);
  std::mt19937_64 rng(46);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec x0 = test::random_in_level(rng, uni.cost.P_f, uni.term.eps);
    const Vec u = uni.term.law(x0);
    CHECK(uni.model.bounds.contains(u, 1e-12));
    const auto sig = ControlSignal::feedback(uni.term.law, 0.0, 60.0);
    const Trajectory tr = integrate(uni.model, x0, sig, 0.0, 60.0, 0.01);
    CHECK(tr.back().norm() <= 1e-3);
  }
}
