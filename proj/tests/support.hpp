#pragma once

#include "stmpc/scenario.hpp"

#include <filesystem>
#include <random>
#include <string>

namespace stmpc::test {

inline std::filesystem::path scenario_path(const std::string& name) {
  return std::filesystem::path(STMPC_SCENARIO_DIR) / (name + ".scenario");
}

inline Scenario shipped(const std::string& name, const std::vector<std::string>& overrides = {}) {
  return parse_scenario(scenario_path(name), overrides);
}

inline Vec random_vec(std::mt19937_64& rng, int n, double scale) {
  std::uniform_real_distribution<double> d(-scale, scale);
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = d(rng);
  return v;
}

/// Random point of the ellipsoid {x : x'P x <= level}, not uniform.
inline Vec random_in_level(std::mt19937_64& rng, const Mat& P, double level) {
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  Vec dir(P.rows());
  for (int i = 0; i < dir.size(); ++i) dir[i] = nd(rng);
  const double q = dir.dot(P * dir);
  return dir * std::sqrt(level / q) * ud(rng);
}

/// Solution on [0, T] whose stage integrand is `f` on a uniform grid. Only
/// the fields the trigger reads are filled.
inline OcpSolution synthetic(const std::vector<double>& f, double T) {
  OcpSolution s;
  s.origin_time = 0.0;
  s.horizon = T;
  const std::size_t n = f.size();
  for (std::size_t i = 0; i < n; ++i) {
    s.state_traj.t.push_back(T * static_cast<double>(i) / static_cast<double>(n - 1));
    s.state_traj.x.push_back(Vec::Zero(1));
  }
  s.stage_integrand = f;
  s.control = ControlSignal::piecewise_linear({0.0, T}, {Vec::Zero(1), Vec::Zero(1)});
  return s;
}

}  // namespace stmpc::test
