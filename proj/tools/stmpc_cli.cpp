// Command-line driver: single runs, periodic baselines and sweeps.

#include "stmpc/artifacts.hpp"
#include "stmpc/scenario.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#ifndef STMPC_SCENARIO_DIR
#define STMPC_SCENARIO_DIR "scenarios"
#endif

namespace fs = std::filesystem;
using namespace stmpc;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

fs::path resolve_scenario(const std::string& name) {
  if (fs::exists(name)) return name;
  for (const fs::path& dir : {fs::path("scenarios"), fs::path(STMPC_SCENARIO_DIR)}) {
    const fs::path p = dir / (name + ".scenario");
    if (fs::exists(p)) return p;
  }
  throw UsageError("scenario '" + name + "' not found (tried the path and " STMPC_SCENARIO_DIR ")");
}

struct Member {
  std::string label;
  std::vector<std::string> overrides;
  std::optional<double> period;
  ClosedLoopLog log;
  Summary summary;
  std::string error;
};

struct Options {
  fs::path scenario;
  std::vector<std::string> overrides;
  fs::path out;
  unsigned jobs = 1;
};

void run_member(const Options& opt, Member& m) {
  try {
    auto ov = opt.overrides;
    ov.insert(ov.end(), m.overrides.begin(), m.overrides.end());
    const Scenario sc = parse_scenario(opt.scenario, ov);
    m.log = m.period ? run_periodic(sc, *m.period) : run_self_triggered(sc);
    m.summary = metrics(m.log, sc.cost);
  } catch (const std::exception& e) {
    m.error = e.what();
  }
}

void run_pool(const Options& opt, std::vector<Member>& members) {
  std::atomic<std::size_t> next{0};
  std::mutex io;
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < members.size();) {
      run_member(opt, members[i]);
      std::lock_guard lock(io);
      const auto& s = members[i].summary;
      std::cout << "[" << members[i].label << "] ";
      if (!members[i].error.empty())
        std::cout << "error: " << members[i].error << '\n';
      else
        std::cout << "events=" << s.mpc_events << " avg_interval="
                  << (s.average_interval ? format_double(*s.average_interval) : "n/a")
                  << " entered=" << (s.entered_region ? "yes" : "no") << " violations=" << s.violations
                  << (s.aborted ? " aborted: " + s.abort_reason : "") << '\n';
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(opt.jobs, static_cast<unsigned>(members.size())));
  std::vector<std::thread> threads;
  for (unsigned i = 1; i < n; ++i) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
}

bool member_ok(const Member& m) { return m.error.empty() && !m.summary.aborted && m.summary.violations == 0; }

void write_member(const fs::path& dir, const Member& m) {
  if (!m.error.empty()) return;
  write_run_artifacts(dir, m.log, m.summary);
}

std::string cell(const std::optional<double>& v, int prec = 3) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", prec, *v);
  return buf;
}

std::vector<int> parse_int_list(const std::string& spec) {
  std::vector<int> out;
  const auto dots = spec.find("..");
  try {
    if (dots != std::string::npos) {
      const int a = std::stoi(spec.substr(0, dots)), b = std::stoi(spec.substr(dots + 2));
      for (int i = a; i <= b; ++i) out.push_back(i);
    } else {
      std::stringstream ss(spec);
      std::string tok;
      while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
    }
  } catch (const std::exception&) {
    throw UsageError("cannot parse sweep values '" + spec + "'");
  }
  if (out.empty()) throw UsageError("empty sweep specification");
  return out;
}

std::vector<double> parse_real_list(const std::string& spec) {
  std::vector<double> out;
  std::stringstream ss(spec);
  std::string tok;
  try {
    while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
  } catch (const std::exception&) {
    throw UsageError("cannot parse sweep values '" + spec + "'");
  }
  if (out.empty()) throw UsageError("empty sweep specification");
  return out;
}

int sweep_N(const Options& opt, const std::vector<int>& Ns) {
  std::vector<Member> members;
  for (int n : Ns)
    for (const char* sel : {"algorithm1", "optimal"})
      members.push_back({"N" + std::to_string(n) + "_" + sel,
                         {"trigger.N=" + std::to_string(n), std::string("trigger.selection=") + sel},
                         std::nullopt, {}, {}, {}});
  run_pool(opt, members);

  std::ostringstream rep;
  auto row = [&](const std::string& title, const char* sel, auto field) {
    rep << title;
    for (std::size_t i = 0; i < Ns.size(); ++i) {
      const Member& m = members[2 * i + (std::string(sel) == "optimal" ? 1 : 0)];
      rep << " | " << std::setw(8) << (m.error.empty() ? field(m.summary) : std::string("error"));
    }
    rep << '\n';
  };
  auto header = [&](const std::string& caption) {
    rep << caption << "\n" << std::setw(20) << std::left << "N" << std::right;
    for (int n : Ns) rep << " | " << std::setw(8) << n;
    rep << '\n';
  };
  header("Average transmission intervals (s)");
  auto interval = [](const Summary& s) { return cell(s.average_interval); };
  row("Algorithm 1         ", "algorithm1", interval);
  row("Optimal intervals   ", "optimal", interval);
  rep << '\n';
  header("Mean calculation time per step, solve + selection (s)");
  auto calc = [](const Summary& s) {
    return cell(std::optional<double>(s.mean_solver_seconds + s.mean_select_seconds));
  };
  row("Algorithm 1         ", "algorithm1", calc);
  row("Optimal intervals   ", "optimal", calc);
  rep << '\n';
  header("Mean selection time per step (s)");
  auto sel = [](const Summary& s) { return cell(std::optional<double>(s.mean_select_seconds), 5); };
  row("Algorithm 1         ", "algorithm1", sel);
  row("Optimal intervals   ", "optimal", sel);

  nlohmann::json j = nlohmann::json::array();
  bool ok = true;
  for (const auto& m : members) {
    write_member(opt.out / m.label, m);
    ok = ok && member_ok(m);
    j.push_back({{"label", m.label}, {"error", m.error}, {"summary", m.error.empty() ? summary_json(m.summary) : nullptr}});
  }
  write_atomic(opt.out / "report.txt", rep.str());
  write_atomic(opt.out / "report.json", j.dump(2) + "\n");
  std::cout << '\n' << rep.str();
  return ok ? 0 : 1;
}

// Shortest text that reads back as the same double.
std::string shortest(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

int sweep_sigma(const Options& opt, const std::vector<double>& sigmas) {
  std::vector<Member> st;
  for (double s : sigmas) st.push_back({"sigma_" + shortest(s), {"trigger.sigma=" + shortest(s)}, std::nullopt, {}, {}, {}});
  run_pool(opt, st);
  std::vector<Member> per;
  for (const auto& m : st)
    if (m.error.empty() && m.summary.average_interval)
      per.push_back({"periodic_" + shortest(*m.summary.average_interval),
                     m.overrides,
                     *m.summary.average_interval,
                     {},
                     {},
                     {}});
  run_pool(opt, per);

  std::ostringstream rep;
  rep << "Self-triggered runs and periodic baselines at the same average interval\n";
  rep << "sigma    | avg interval | entered | closed-loop cost | periodic entered | periodic cost | periodic outcome\n";
  bool ok = true;
  for (const auto& m : st) {
    write_member(opt.out / m.label, m);
    ok = ok && member_ok(m);
    const auto& s = m.summary;
    rep << std::setw(8) << std::left << m.overrides.front().substr(14) << std::right << " | " << std::setw(12)
        << cell(s.average_interval) << " | " << std::setw(7) << (s.entered_region ? "yes" : "no") << " | "
        << std::setw(16) << cell(std::optional<double>(s.closed_loop_cost)) << " | ";
    const auto it = std::find_if(per.begin(), per.end(), [&](const Member& p) { return p.overrides == m.overrides; });
    if (it == per.end()) {
      rep << "no periodic run (" << (m.error.empty() ? s.abort_reason : m.error) << ")\n";
      continue;
    }
    write_member(opt.out / it->label, *it);
    const auto& p = it->summary;
    std::string outcome = p.entered_region ? "stabilized" : (p.diverged ? "diverged" : "did not enter Omega(eps)");
    if (p.aborted) outcome += " (" + p.abort_reason + ")";
    rep << std::setw(16) << (p.entered_region ? "yes" : "no") << " | " << std::setw(13)
        << cell(std::optional<double>(p.closed_loop_cost)) << " | " << outcome << '\n';
  }
  write_atomic(opt.out / "report.txt", rep.str());
  std::cout << '\n' << rep.str();
  return ok ? 0 : 1;
}

int run_command(const Options& opt, const std::string& mode) {
  if (mode == "self-triggered" || mode == "optimal-baseline" || mode.rfind("periodic:", 0) == 0) {
    Member m;
    m.label = mode;
    if (mode == "optimal-baseline") m.overrides.push_back("trigger.selection=optimal");
    if (mode.rfind("periodic:", 0) == 0) {
      try {
        m.period = std::stod(mode.substr(9));
      } catch (const std::exception&) {
        throw UsageError("periodic mode needs a period, e.g. periodic:0.13");
      }
      if (!(*m.period > 0.0)) throw UsageError("periodic period must be positive");
    }
    std::vector<Member> one{m};
    run_pool(opt, one);
    if (!one[0].error.empty()) {
      std::cerr << "error: " << one[0].error << '\n';
      return 1;
    }
    write_member(opt.out, one[0]);
    return member_ok(one[0]) ? 0 : 1;
  }
  if (mode.rfind("sweep:", 0) == 0) {
    const std::string spec = mode.substr(6);
    const auto eq = spec.find('=');
    if (spec.empty() || eq == std::string::npos || eq + 1 >= spec.size())
      throw UsageError("sweep needs a specification such as sweep:N=1..5 or sweep:sigma=0.6,0.99");
    const std::string what = spec.substr(0, eq), values = spec.substr(eq + 1);
    if (what == "N") return sweep_N(opt, parse_int_list(values));
    if (what == "sigma") return sweep_sigma(opt, parse_real_list(values));
    throw UsageError("unknown sweep parameter '" + what + "'");
  }
  throw UsageError("unknown mode '" + mode + "'");
}

int check_command(const Options& opt, int samples) {
  const Scenario sc = parse_scenario(opt.scenario, opt.overrides);
  std::cout << "scenario " << sc.name << ": n=" << sc.model.n << " m=" << sc.model.m << " T_p=" << sc.T_p
            << " sigma=" << sc.trigger.sigma << " N=" << sc.trigger.N << "\n";
  std::cout << "L_phi=" << sc.model.L_phi << " L_G=" << sc.model.L_G << " L_F=" << sc.cost.L_F
            << " L_Vf=" << sc.cost.L_Vf << "\n";
  const BoundParams p = make_bound_params(sc, &std::cout);
  const DwellCertificate d = dwell_certificate(p, sc.cost, sc.term);
  std::cout << "delta_min_1=" << d.delta_min_1 << " delta_bar_J=" << d.delta_bar_J << "\n";
  const auto rep = verify_assumption2(sc.model, sc.cost, sc.term, samples);
  std::cout << "terminal decrease check on " << rep.samples << " samples: worst margin " << rep.worst_margin << ", "
            << rep.violations.size() << " violations, " << rep.inadmissible.size() << " inadmissible inputs\n";
  std::cout << "required K_u over Omega(eps_f): " << required_Ku(sc.model, sc.cost, sc.term, samples) << "\n";
  return rep.ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-triggered MPC over a simulated network"};
  app.require_subcommand(1);

  Options opt;
  std::string scenario, mode = "self-triggered", out = "out";
  long seed = -1;
  int samples = 2000;
  unsigned jobs = std::max(1u, std::thread::hardware_concurrency());

  auto* run = app.add_subcommand("run", "run a scenario");
  run->add_option("--scenario", scenario, "scenario file or shipped scenario name")->required();
  run->add_option("--mode", mode, "self-triggered | optimal-baseline | periodic:P | sweep:N=a..b | sweep:sigma=s1,s2");
  run->add_option("--override", opt.overrides, "KEY=VALUE (repeatable)");
  run->add_option("--out", out, "output directory (STMPC_OUT takes precedence)");
  run->add_option("--jobs", jobs, "worker threads for sweeps");
  run->add_option("--seed", seed, "disturbance seed (sim.seed)");

  auto* check = app.add_subcommand("check", "print derived constants and check the terminal ingredients");
  check->add_option("--scenario", scenario, "scenario file or shipped scenario name")->required();
  check->add_option("--override", opt.overrides, "KEY=VALUE (repeatable)");
  check->add_option("--samples", samples, "samples drawn from the terminal region");

  CLI11_PARSE(app, argc, argv);

  try {
    opt.scenario = resolve_scenario(scenario);
    if (seed >= 0) opt.overrides.push_back("sim.seed=" + std::to_string(seed));
    if (const char* env = std::getenv("STMPC_OUT"); env && *env) out = env;
    opt.out = out;
    opt.jobs = jobs;
    // Parse once up front so usage and validation errors surface before any work.
    (void)parse_scenario(opt.scenario, opt.overrides);
    if (*check) return check_command(opt, samples);
    return run_command(opt, mode);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const ScenarioError& e) {
    std::cerr << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
