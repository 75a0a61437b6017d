#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace stmpc;

namespace {

const char* kMinimal = R"(# minimal unicycle
[scenario]
name = tiny

[plant]
kind = unicycle
v_bar = 1.5
w_bar = 0.5
K_u = 1.5

[cost]
Q = diag(0.1 0.1 0.1)
R = diag(0.05 0.05)
P_f = 1 0 0; 0 1 0; 0 0 1
rho = 6.59

[terminal]
eps = 0.8
eps_f = 0.4

[trigger]
sigma = 0.99
N = 2

[sim]
x0 = -5 4 -pi/2
T_p = 7
)";

}  // namespace

TEST_CASE("shipped pendulum scenario") {
  const Scenario sc = test::shipped("pendulum");
  CHECK(sc.name == "pendulum");
  CHECK(sc.trigger.sigma == 0.99);
  CHECK(sc.trigger.N == 1);
  CHECK(sc.T_p == 14.0);
  CHECK(sc.term.eps == 0.43);
  CHECK(sc.term.eps_f == 0.2);
  CHECK(sc.model.K_u == 2.0);
  CHECK(sc.model.bounds.radius == 8.5);
  CHECK(sc.cost.Q.isApprox(3.0 * Mat::Identity(4, 4)));
  CHECK(sc.cost.R(0, 0) == 1.5);
  CHECK(sc.cost.P_f(0, 0) == 21.0);
  CHECK(sc.cost.P_f(3, 3) == 40822.0);
  REQUIRE(sc.term.K_gain.has_value());
  CHECK((*sc.term.K_gain)(0, 2) == -228.1);
  CHECK(sc.x0[0] == 1.0);
  CHECK(sc.x0[2] == 0.1);
}

TEST_CASE("shipped unicycle scenario") {
  const Scenario sc = test::shipped("unicycle");
  CHECK(sc.T_p == 7.0);
  CHECK(sc.term.eps == 0.8);
  CHECK(sc.term.eps_f == 0.4);
  CHECK(sc.model.K_u == 1.5);
  CHECK(sc.trigger.sigma == 0.99);
  CHECK(sc.trigger.N == 2);
  CHECK(sc.x0[2] == -std::numbers::pi / 2);
  CHECK(sc.cost.R.isApprox(0.05 * Mat::Identity(2, 2)));
}

TEST_CASE("minimal scenario text and defaults") {
  const Scenario sc = parse_scenario_text(kMinimal);
  CHECK(sc.name == "tiny");
  CHECK(sc.trigger.search_step == doctest::Approx(7.0 / 1000));
  CHECK(sc.sim_horizon == 40.0);
  CHECK(sc.truth_step == 1e-3);
  CHECK(sc.lipschitz == LipschitzMode::Lemma1);
  CHECK(sc.selection == Selection::Algorithm1);
  CHECK(sc.dual.mode == DualModeConfig::Mode::StandAlone);
}

TEST_CASE("overrides") {
  const Scenario sc = parse_scenario_text(kMinimal, {"trigger.sigma=0.6", "trigger.N=4", "sim.delay=0.05",
                                                     "trigger.tau_d_bar=0.1", "trigger.selection=optimal"});
  CHECK(sc.trigger.sigma == 0.6);
  CHECK(sc.trigger.N == 4);
  CHECK(sc.delay == 0.05);
  CHECK(sc.selection == Selection::Optimal);
  CHECK_THROWS_WITH_AS(parse_scenario_text(kMinimal, {"trigger.bogus=1"}), doctest::Contains("unknown key"),
                       ScenarioError);
  CHECK_THROWS_AS(parse_scenario_text(kMinimal, {"trigger.sigma"}), ScenarioError);
}

TEST_CASE("sigma outside (0,1) is a validation error") {
  try {
    parse_scenario_text(kMinimal, {"trigger.sigma=1.2"});
    FAIL("expected a validation error");
  } catch (const ScenarioError& e) {
    const std::string what = e.what();
    CHECK(what.find("validation error") != std::string::npos);
    CHECK(what.find("0 < σ < 1") != std::string::npos);
  }
  std::string text = kMinimal;
  text.replace(text.find("sigma = 0.99"), 12, "sigma = 1.2");
  try {
    parse_scenario_text(text, {}, "file.scenario");
    FAIL("expected a validation error");
  } catch (const ScenarioError& e) {
    CHECK(e.source() == "file.scenario");
    CHECK(e.line() == 22);
    CHECK(e.column() == 9);
    CHECK(std::string(e.what()).rfind("file.scenario:22:9:", 0) == 0);
  }
}

TEST_CASE("parse errors carry positions") {
  auto expect = [](const std::string& text, int line, const std::string& fragment) {
    try {
      parse_scenario_text(text);
      FAIL("expected a parse error for: " << text);
    } catch (const ScenarioError& e) {
      CHECK(e.line() == line);
      CHECK(std::string(e.what()).find(fragment) != std::string::npos);
    }
  };
  expect("[scenario\nname = x\n", 1, "malformed section header");
  expect("[plant]\nkind unicycle\n", 2, "expected 'key = value'");
  expect("[plant]\nspeed = 3\n", 2, "unknown key 'plant.speed'");
  expect("[plant]\nkind = \n", 2, "missing value");
  expect("[plant]\nkind = unicycle\nkind = pendulum\n", 3, "duplicate key");

  std::string text = kMinimal;
  text.replace(text.find("v_bar = 1.5"), 11, "v_bar = fast");
  expect(text, 7, "is not a number");
  text = kMinimal;
  text.replace(text.find("Q = diag(0.1 0.1 0.1)"), 21, "Q = diag(0.1 0.1");
  expect(text, 12, "unterminated diag");
  text = kMinimal;
  text.replace(text.find("P_f = 1 0 0; 0 1 0; 0 0 1"), 25, "P_f = 1 0 0; 0 1; 0 0 1");
  expect(text, 14, "different lengths");
  text = kMinimal;
  text.replace(text.find("x0 = -5 4 -pi/2"), 15, "x0 = -5 4");
  expect(text, 26, "sim.x0 must have 3 entries");
  text = kMinimal;
  text.replace(text.find("T_p = 7"), 7, "");
  expect(text, 0, "missing required key 'sim.T_p'");
}

TEST_CASE("invariant violations name the invariant") {
  CHECK_THROWS_WITH(parse_scenario_text(kMinimal, {"terminal.eps=0.3"}), doctest::Contains("eps_f"));
  CHECK_THROWS_WITH(parse_scenario_text(kMinimal, {"sim.delay=0.2"}), doctest::Contains("tau_d_bar"));
  CHECK_THROWS_WITH(parse_scenario_text(kMinimal, {"trigger.N=0"}), doctest::Contains("validation error"));
  CHECK_THROWS_WITH(parse_scenario_text(kMinimal, {"plant.kind=boat"}), doctest::Contains("plant.kind"));
  CHECK_THROWS_WITH(parse_scenario_text(kMinimal, {"bounds.lipschitz=fixed"}), doctest::Contains("L_J"));
}

TEST_CASE("number syntax") {
  const Scenario sc = parse_scenario_text(kMinimal, {"sim.x0=2*pi -1e-1 pi"});
  CHECK(sc.x0[0] == doctest::Approx(2 * std::numbers::pi));
  CHECK(sc.x0[1] == -0.1);
  CHECK(sc.x0[2] == std::numbers::pi);
}

TEST_CASE("every paper parameter is a key") {
  const auto& keys = known_scenario_keys();
  for (const char* k : {"trigger.sigma", "trigger.N", "sim.T_p", "terminal.eps", "terminal.eps_f", "plant.K_u",
                        "plant.u_max", "cost.Q", "cost.R", "cost.P_f", "terminal.K", "sim.w_max", "trigger.tau_d_bar",
                        "dual.delta_l"})
    CHECK(std::find(keys.begin(), keys.end(), k) != keys.end());
}

TEST_CASE("missing scenario file") {
  CHECK_THROWS_WITH_AS(parse_scenario("/nonexistent/x.scenario"), doctest::Contains("cannot read"), ScenarioError);
}
