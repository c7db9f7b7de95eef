#include <cmath>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "feedopf/export.hpp"
#include "feedopf/runner.hpp"
#include "json.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kConvergenceError = 3;
constexpr int kCertificateViolation = 4;

struct CommonFlags {
  std::string scenario = "paper-5node";
  std::string sampling;
  int slots = -2;  // -2: keep the scenario's value
  std::string out;
  std::string format = "csv";
  std::optional<unsigned long long> seed;
  std::optional<double> tol;
};

feedopf::ScenarioConfig resolve(const CommonFlags& f) {
  feedopf::ScenarioConfig cfg = feedopf::load_scenario(f.scenario);
  if (!f.sampling.empty()) {
    cfg.sampling_interval_s = feedopf::parse_sampling_spec(f.sampling, cfg.tau_s);
  }
  if (f.slots >= -1) cfg.slots = f.slots;
  if (f.seed) cfg.seed = *f.seed;
  if (f.tol) cfg.subproblem.tol = *f.tol;
  if (!f.out.empty()) cfg.output_path = f.out;
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--scenario", f.scenario, "Scenario JSON path or built-in name");
  cmd->add_option("--sampling", f.sampling, "Sampling interval: seconds or '<m>x-tau'");
  cmd->add_option("--slots", f.slots, "Slot count (overrides the scenario)");
  cmd->add_option("--out", f.out, "Output path");
  cmd->add_option("--seed", f.seed, "Probe RNG seed");
  cmd->add_option("--tol", f.tol, "Inner-solver tolerance override");
}

int cmd_run(const CommonFlags& f, bool certify, bool ideal, int probes) {
  const feedopf::ScenarioConfig cfg = resolve(f);
  feedopf::RunOptions opt;
  opt.certify = certify;
  opt.force_ideal = ideal;
  opt.probe_count = probes;
  const feedopf::TrajectoryRecord traj = feedopf::run_closed_loop(cfg, opt);

  const std::string path = !cfg.output_path.empty()
                               ? cfg.output_path
                               : "trajectory." + f.format;
  feedopf::export_trajectory(traj, path,
                             f.format == "json" ? feedopf::ExportFormat::Json
                                                : feedopf::ExportFormat::Csv);

  const feedopf::SlotRecord& last = traj.slots.back();
  const double kw = cfg.feeder.bases.s_va / 1000.0;
  std::cout << "wrote " << path << " (" << traj.slots.size() << " slots)\n";
  std::cout << "final p_kw:";
  for (const feedopf::SetPoint& y : last.y) std::cout << ' ' << y.p * kw;
  std::cout << "\nfitted G=" << traj.bounds.G << " G_tilde=" << traj.bounds.G_tilde << '\n';
  if (certify && !traj.certificates_ok()) {
    std::cerr << "certificate violation in trajectory\n";
    return kCertificateViolation;
  }
  return kOk;
}

int cmd_oracle(const CommonFlags& f, int max_iter, double initial_step) {
  const feedopf::ScenarioConfig cfg = resolve(f);
  feedopf::OracleOptions opt;
  opt.max_iter = max_iter;
  opt.initial_step = initial_step;
  if (f.tol) opt.tol = *f.tol;
  const feedopf::OracleSolution sol = feedopf::oracle_solve(cfg, opt);

  const std::string path = !cfg.output_path.empty() ? cfg.output_path : "solution.json";
  feedopf::export_solution(sol, cfg.feeder.bases, path);

  const double kw = cfg.feeder.bases.s_va / 1000.0;
  std::cout << "wrote " << path << " after " << sol.iterations << " iterations\n";
  std::cout << "u_p_kw:";
  for (const feedopf::SetPoint& u : sol.u) std::cout << ' ' << u.p * kw;
  std::cout << "\nprimal=" << sol.primal << " dual=" << sol.dual
            << " gap=" << std::abs(sol.primal - sol.dual) << " balance=" << sol.balance
            << " rank_ratio=" << sol.rank_ratio << '\n';
  return kOk;
}

int cmd_verify(const std::string& trajectory_path, const std::string& solution_path,
               double tol) {
  const feedopf::ParsedTrajectory traj = feedopf::load_trajectory_csv(trajectory_path);
  const int c_eps = traj.column("epsilon_est");
  const int c_eps_bound = traj.column("epsilon_bound");
  const int c_track = traj.column("tracking_err");
  const int c_track_bound = traj.column("tracking_bound");
  if (c_eps < 0 || c_eps_bound < 0 || c_track < 0 || c_track_bound < 0) {
    throw feedopf::ConfigError("verify: trajectory is missing certificate columns");
  }

  int eps_checked = 0;
  int violations = 0;
  for (const std::vector<double>& row : traj.rows) {
    const double eps = row[static_cast<std::size_t>(c_eps)];
    if (!std::isnan(eps)) {
      ++eps_checked;
      if (eps < -1e-8 || eps > row[static_cast<std::size_t>(c_eps_bound)] + 1e-8) {
        ++violations;
      }
    }
    const double tb = row[static_cast<std::size_t>(c_track_bound)];
    if (tb > 0.0 && row[static_cast<std::size_t>(c_track)] > tb + 1e-8) ++violations;
  }
  std::cout << "slots=" << traj.rows.size() << " epsilon_checked=" << eps_checked
            << " violations=" << violations << '\n';

  if (!solution_path.empty()) {
    const feedopf::OracleSolution sol = feedopf::load_solution(solution_path);
    double s_va = 10000.0;
    for (const std::string& meta : traj.metadata) {
      const auto pos = meta.find("s_va=");
      if (meta.rfind("bases", 0) == 0 && pos != std::string::npos) {
        s_va = std::stod(meta.substr(pos + 5));
      }
    }
    const std::vector<double>& last = traj.rows.back();
    double worst = 0.0;
    for (std::size_t i = 0; i < sol.u.size(); ++i) {
      const int cp = traj.column("u_p_kw_" + std::to_string(i + 1));
      const int cq = traj.column("u_q_kvar_" + std::to_string(i + 1));
      if (cp < 0 || cq < 0) {
        throw feedopf::ConfigError("verify: trajectory has fewer inverters than solution");
      }
      const double p_pu = last[static_cast<std::size_t>(cp)] * 1000.0 / s_va;
      const double q_pu = last[static_cast<std::size_t>(cq)] * 1000.0 / s_va;
      worst = std::max(worst, std::hypot(p_pu - sol.u[i].p, q_pu - sol.u[i].q));
    }
    std::cout << "final-reference gap vs solution: " << worst << " pu (tol " << tol << ")\n";
    if (worst > tol) ++violations;
  }

  if (violations > 0) {
    std::cerr << violations << " certificate violation(s)\n";
    return kCertificateViolation;
  }
  std::cout << "all certificates hold\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Networked-inverter feedback optimization simulator"};
  app.require_subcommand(1);

  CommonFlags run_flags;
  bool run_no_certify = false;
  bool run_ideal = false;
  int run_probes = 16;
  CLI::App* run = app.add_subcommand("run", "Simulate the closed loop, export a trajectory");
  add_common(run, run_flags);
  run->add_option("--format", run_flags.format, "csv | json")
      ->check(CLI::IsMember({"csv", "json"}));
  run->add_flag("--no-certify", run_no_certify, "Skip the certification passes");
  run->add_flag("--ideal", run_ideal, "Force exact output tracking (y = u)");
  run->add_option("--probes", run_probes, "Gaussian probes per certified slot");

  CommonFlags oracle_flags;
  int oracle_max_iter = 50000;
  double oracle_c = 2.0;
  CLI::App* oracle = app.add_subcommand("oracle", "Solve for the steady-state fixed point");
  add_common(oracle, oracle_flags);
  oracle->add_option("--max-iter", oracle_max_iter, "Iteration cap");
  oracle->add_option("--c", oracle_c, "Harmonic stepsize scale");

  std::string verify_trajectory;
  std::string verify_solution;
  double verify_tol = 1e-3;
  CLI::App* verify = app.add_subcommand("verify", "Check certificates in a trajectory CSV");
  verify->add_option("trajectory", verify_trajectory, "Trajectory CSV path")->required();
  verify->add_option("--solution", verify_solution, "Solution JSON to compare against");
  verify->add_option("--tol", verify_tol, "Final-reference gap tolerance, pu");

  std::string print_name = "paper-5node";
  CLI::App* scenario = app.add_subcommand("scenario", "Scenario utilities");
  CLI::App* print = scenario->add_subcommand("print", "Print a resolved scenario as JSON");
  print->add_option("name", print_name, "Built-in name or JSON path");
  scenario->require_subcommand(1);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      return cmd_run(run_flags, !run_no_certify, run_ideal, run_probes);
    }
    if (oracle->parsed()) return cmd_oracle(oracle_flags, oracle_max_iter, oracle_c);
    if (verify->parsed()) return cmd_verify(verify_trajectory, verify_solution, verify_tol);
    if (scenario->parsed()) {
      std::cout << feedopf::scenario_to_json(feedopf::load_scenario(print_name)) << '\n';
      return kOk;
    }
  } catch (const feedopf::ConvergenceError& e) {
    std::cerr << "convergence failure: " << e.what() << '\n';
    return kConvergenceError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  }
  return kConfigError;
}
