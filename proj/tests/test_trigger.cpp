#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace stmpc;

namespace {

double lemma3_residual(double tau, double delta, double L) {
  return std::exp(L * (tau - delta)) * (1.0 - L * delta) - 1.0;
}

BoundParams trigger_params(double L_J, double w_max = 0.0) {
  BoundParams p = BoundParams::make(1.2, 0.5, 1.0, 1.0, 5.0, 1.0, 0.9, w_max);
  p.L_J = L_J;
  p.lj_source = "fixed";
  return p;
}

TriggerConfig config(int N, double step = 0.005) {
  TriggerConfig c;
  c.N = N;
  c.search_step = step;
  c.root_tol = 1e-9;
  return c;
}

/// Decaying integrand sampled finely on [0, 5].
OcpSolution decaying(double scale, double rate) {
  std::vector<double> f(5001);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = scale * std::exp(-rate * 5.0 * static_cast<double>(i) / 5000.0);
  return test::synthetic(f, 5.0);
}

}  // namespace

TEST_CASE("Lemma 3 split on a worked example") {
  const double d = split_interval(0.5, 1.0, 1e-12);
  CHECK(lemma3_residual(0.5, 0.23, 1.0) > 0.0);
  CHECK(lemma3_residual(0.5, 0.235, 1.0) < 0.0);
  CHECK(d > 0.23);
  CHECK(d < 0.235);
}

TEST_CASE("Lemma 3 split maximizes the bound reduction") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> ul(0.1, 3.0), ut(0.01, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double L = ul(rng), tau = ut(rng);
    const double d = split_interval(tau, L, 1e-12);
    auto gain = [&](double delta) { return delta * std::expm1(L * (tau - delta)); };
    double best = 0.0, arg = 0.0;
    const int n = 20000;
    for (int i = 1; i < n; ++i) {
      const double delta = tau * i / n;
      if (gain(delta) > best) {
        best = gain(delta);
        arg = delta;
      }
    }
    CHECK(std::abs(arg - d) <= tau / n * 1.01);
    CHECK(gain(d) >= best * (1 - 1e-12));
  }
}

TEST_CASE("Lemma 3 split scales with L_phi") {
  CHECK(split_interval(0.25, 2.0, 1e-12) == doctest::Approx(0.5 * split_interval(0.5, 1.0, 1e-12)).epsilon(1e-13));
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.05, 3.0);
  for (int i = 0; i < 50; ++i) {
    const double L = u(rng), tau = u(rng), k = u(rng);
    CHECK(split_interval(tau / k, L * k, 1e-12) == doctest::Approx(split_interval(tau, L, 1e-12) / k).epsilon(1e-12));
  }
}

TEST_CASE("Lemma 3 split for vanishing intervals") {
  double prev_ratio = 0.0;
  std::vector<double> gaps;
  for (double tau : {1e-2, 1e-3, 1e-4}) {
    const double d = split_interval(tau, 1.0, 1e-15);
    CHECK(d > 0.0);
    CHECK(d < tau);
    const double ratio = d / tau;
    CHECK(ratio > 0.0);
    CHECK(ratio < 1.0);
    if (prev_ratio > 0.0) gaps.push_back(std::abs(ratio - prev_ratio));
    prev_ratio = ratio;
  }
  CHECK(gaps[1] < gaps[0]);
  CHECK(prev_ratio == doctest::Approx(0.5).epsilon(1e-3));
  CHECK_THROWS(split_interval(0.0, 1.0, 1e-9));
  CHECK_THROWS(split_interval(1.0, 0.0, 1e-9));
}

TEST_CASE("split gain equals the closed-form reduction") {
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    BoundParams p = BoundParams::make(0.2 + 2 * u(rng), 0.1 + u(rng), 1, 1, 10, 0.5 + u(rng), 0.5);
    std::vector<double> prefix(trial % 3);
    for (double& v : prefix) v = 0.3 * u(rng);
    const double tau = 0.01 + u(rng);
    const double delta = tau * u(rng);
    const double closed = 2 * p.K_u * p.L_G / p.L_phi * delta * std::expm1(p.L_phi * (tau - delta));
    CHECK(split_gain(prefix, tau, delta, p) == doctest::Approx(closed).epsilon(1e-9));
  }
}

TEST_CASE("trigger margin") {
  const OcpSolution s = decaying(2.0, 0.3);
  const BoundParams p = trigger_params(4.0);
  const double none[] = {0.0};
  CHECK(gamma(none, s, p) == 0.0);
  const double small[] = {1e-4};
  CHECK(gamma(small, s, p) < 0.0);
  const double too_long[] = {6.0};
  CHECK_THROWS(gamma(too_long, s, p));
}

TEST_CASE("violation time agrees with a fine scan") {
  // constant integrand c: margin is h_x(tau) - sigma c tau / L_J
  for (double c : {0.5, 2.0, 7.0}) {
    const OcpSolution s = test::synthetic(std::vector<double>(101, c), 5.0);
    const BoundParams p = trigger_params(3.0);
    const TriggerConfig cfg = config(1, 0.05);
    const ViolationTime v = violation_time({}, s, p, cfg);
    REQUIRE_FALSE(v.capped);
    double scan = 0.0;
    for (int i = 1;; ++i) {
      const double t = i * 1e-6;
      if (hx(t, p) - p.sigma * c * t / p.L_J >= 0.0) {
        scan = t;
        break;
      }
    }
    CHECK(std::abs(v.tau - scan) <= 1e-6 + cfg.root_tol);
    const double at[] = {v.tau};
    const double past[] = {v.tau + cfg.root_tol};
    CHECK(gamma(at, s, p) <= 0.0);
    CHECK(gamma(past, s, p) >= 0.0);
  }
}

TEST_CASE("violation time is capped by the horizon and delay budget") {
  const OcpSolution s = test::synthetic(std::vector<double>(101, 1e6), 5.0);
  const BoundParams p = trigger_params(3.0);
  TriggerConfig cfg = config(1, 0.05);
  cfg.tau_d_bar = 0.5;
  const ViolationTime v = violation_time({}, s, p, cfg);
  CHECK(v.capped);
  CHECK(v.tau == doctest::Approx(5.0 - 0.5 - cfg.root_tol));
}

TEST_CASE("Algorithm 1 schedules") {
  const OcpSolution s = decaying(3.0, 0.4);
  const BoundParams p = trigger_params(6.0);

  const SamplingSchedule one = select_schedule(s, p, config(1), 0.01);
  REQUIRE(one.deltas.size() == 1);
  CHECK(one.deltas[0] == one.tau_list[0]);
  CHECK(one.samples.size() == 2);
  CHECK(one.next_time == doctest::Approx(one.total()));

  double prev_total = one.total();
  for (int N = 2; N <= 5; ++N) {
    const SamplingSchedule sch = select_schedule(s, p, config(N), 0.01);
    CHECK(sch.deltas.size() == static_cast<std::size_t>(N));
    CHECK(sch.samples.size() == static_cast<std::size_t>(N + 1));
    CHECK(sch.total() > prev_total);
    prev_total = sch.total();
    // each split is the Lemma 3 root of the violation time found with the
    // preceding splits fixed
    for (int n = 0; n + 1 < N; ++n)
      CHECK(sch.deltas[static_cast<std::size_t>(n)] == split_interval(sch.tau_list[static_cast<std::size_t>(n)], p.L_phi, 1e-9));
    CHECK(sch.deltas.back() == sch.tau_list.back());
    double t = 0.0;
    for (std::size_t n = 0; n < sch.deltas.size(); ++n) {
      CHECK((sch.samples[n] - s.control.at(t)).norm() == 0.0);
      t += sch.deltas[n];
    }
  }
}

TEST_CASE("optimal split search") {
  const BoundParams p = trigger_params(6.0);
  for (int N = 2; N <= 3; ++N) {
    for (double total : {0.2, 0.8, 1.5}) {
      std::vector<double> split;
      const double best = minimize_ex_split(total, N, p, &split);
      CHECK(std::accumulate(split.begin(), split.end(), 0.0) == doctest::Approx(total).epsilon(1e-12));
      CHECK(best == doctest::Approx(ex(split, p)).epsilon(1e-12));
      double brute = 1e300;
      const int n = 400;
      for (int i = 0; i <= n; ++i) {
        if (N == 2) {
          const double d[] = {total * i / n, total - total * i / n};
          brute = std::min(brute, ex(d, p));
        } else {
          for (int j = 0; i + j <= n; ++j) {
            const double d[] = {total * i / n, total * j / n, total - total * (i + j) / n};
            brute = std::min(brute, ex(d, p));
          }
        }
      }
      CHECK(best <= brute * (1 + 1e-9));
    }
  }
}

TEST_CASE("optimal baseline is never shorter than Algorithm 1") {
  for (double rate : {0.1, 0.6, 1.5}) {
    const OcpSolution s = decaying(3.0, rate);
    const BoundParams p = trigger_params(6.0);
    const auto a1 = select_schedule(s, p, config(1), 0.01);
    const auto o1 = select_schedule_optimal(s, p, config(1), 0.01);
    CHECK(std::abs(a1.total() - o1.total()) <= 2e-9);
    for (int N = 2; N <= 4; ++N) {
      const auto a = select_schedule(s, p, config(N), 0.01);
      const auto o = select_schedule_optimal(s, p, config(N), 0.01);
      CHECK(o.total() >= a.total() - 1e-9);
    }
  }
  CHECK_THROWS(select_schedule_optimal(decaying(1, 1), trigger_params(6.0), config(6), 0.01));
}

TEST_CASE("degenerate first violation falls back to the dwell time") {
  const OcpSolution s = test::synthetic(std::vector<double>(101, 0.0), 5.0);
  const BoundParams p = trigger_params(6.0);
  const auto sch = select_schedule(s, p, config(2), 0.037);
  CHECK(sch.fallback);
  REQUIRE(sch.deltas.size() == 1);
  CHECK(sch.deltas[0] == 0.037);
}

TEST_CASE("disturbance shortens violation times but not the split rule") {
  const OcpSolution s = decaying(3.0, 0.4);
  double prev = 1e9;
  for (double w : {0.0, 0.05, 0.1}) {
    const BoundParams p = trigger_params(6.0, w);
    const auto sch = select_schedule(s, p, config(3), 0.01);
    CHECK(sch.tau_list[0] <= prev);
    prev = sch.tau_list[0];
    for (std::size_t n = 0; n + 1 < sch.deltas.size(); ++n)
      CHECK(sch.deltas[n] == split_interval(sch.tau_list[n], trigger_params(6.0).L_phi, 1e-9));
  }
}

TEST_CASE("dwell certificate") {
  const Scenario sc = test::shipped("pendulum");
  const BoundParams p = BoundParams::make(1.05, 0.067, sc.cost.L_F, sc.cost.L_Vf, 14, 2.0, 0.99);
  const DwellCertificate d = dwell_certificate(p, sc.cost, sc.term);
  CHECK(d.delta_min_1 > 0.0);
  CHECK_FALSE(d.delta_min_2.has_value());
  CHECK(d.delta_min == d.delta_min_1);
  CHECK(d.delta_bar_J > 0.0);
  const double a = 3.0 * sc.term.eps_f / max_eigenvalue(sc.cost.P_f);
  CHECK(d.delta_min_1 == doctest::Approx(std::log(1 + 0.99 * 1.05 * a / (2 * 2.0 * 0.067 * p.L_J)) / 1.05).epsilon(1e-9));

  BoundParams tiny = p;
  tiny.sigma = 1e-12;
  CHECK(dwell_certificate(tiny, sc.cost, sc.term).delta_min_1 < 1e-12);
}

TEST_CASE("trigger configuration validation") {
  TriggerConfig c;
  c.sigma = 1.2;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("0 < σ < 1"), std::invalid_argument);
  c.sigma = 0.5;
  c.N = 0;
  CHECK_THROWS(c.validate());
}
