#include "feedopf/runner.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <sstream>

namespace feedopf {

namespace {

ComplexMatrix lagrangian_v_gradient(const HermitianMatrix& v, const Eigen::VectorXd& lambda,
                                    const PowerFlowMatrices& m, const SdpCost& cost) {
  const double t0 = trace_real(m.phi[0].mat(), v.mat());
  ComplexMatrix g = (cost.a * t0 + cost.b) * m.phi[0].mat() + cost.rho * v.mat();
  for (Eigen::Index i = 1; i < m.nodes(); ++i) {
    g += lambda(2 * (i - 1)) * m.phi[i].mat() + lambda(2 * (i - 1) + 1) * m.psi[i].mat();
  }
  return g;
}

std::vector<SetPoint> references(const Eigen::VectorXd& lambda, const Problem& problem) {
  std::vector<SetPoint> u(problem.n_inv());
  for (int i = 0; i < problem.n_inv(); ++i) {
    u[i] = primal_u_update(lambda.segment<2>(2 * i), problem.agent_costs[i],
                           problem.caps[i]);
  }
  return u;
}

HermitianMatrix initial_v(const ScenarioConfig& config, const Problem& problem,
                          const Eigen::VectorXd& lambda0) {
  if (config.initial_v == InitialV::Argmin) {
    return solve_v_subproblem(lambda0, problem.matrices, problem.sdp_cost, problem.vset,
                              problem.subproblem)
        .V;
  }
  return HermitianMatrix(ComplexMatrix::Identity(problem.matrices.nodes(),
                                                 problem.matrices.nodes()));
}

void fill_voltage_stats(SlotRecord& rec, const HermitianMatrix& v,
                        const PowerFlowMatrices& m) {
  rec.substation_p = trace_real(m.phi[0].mat(), v.mat());
  rec.v_rank_ratio = rank1_extract(v).ratio;
  const Eigen::VectorXd diag = v.mat().diagonal().real();
  rec.min_vmag = std::sqrt(std::max(0.0, diag.minCoeff()));
  rec.max_vmag = std::sqrt(std::max(0.0, diag.maxCoeff()));
}

}  // namespace

bool TrajectoryRecord::certificates_ok() const {
  for (const SlotRecord& s : slots) {
    if (!s.epsilon_nonneg_ok || !s.epsilon_bound_ok || !s.probes_ok || !s.tracking_ok) {
      return false;
    }
  }
  return true;
}

TrajectoryRecord run_closed_loop(const ScenarioConfig& config, const RunOptions& opt) {
  const BuiltScenario built = build_problem(config);
  const Problem& problem = built.problem;
  const int n = problem.n_inv();
  const int horizon = config.resolved_slots();
  const double dt = config.sampling_interval_s;

  PlantState plant;
  plant.x.assign(static_cast<std::size_t>(n), SetPoint{});

  ControllerIterate state;
  state.k = 0;
  state.t = 0.0;
  state.lambda = built.lambda0;
  state.V = initial_v(config, problem, built.lambda0);
  state.u = references(built.lambda0, problem);
  state.y_sampled = sample(plant);
  state.diag.grad_norm =
      balance_residual(state.V, state.y_sampled, problem.loads, problem.matrices).norm();

  std::vector<ControllerIterate> iterates;
  iterates.reserve(static_cast<std::size_t>(horizon) + 1);
  iterates.push_back(state);

  const StepOptions step_opt{dt, opt.force_ideal};
  for (int k = 0; k < horizon; ++k) {
    step_closed_loop(state, plant, built.plant, problem, config.schedule, step_opt);
    iterates.push_back(state);
  }

  TrajectoryRecord traj;
  traj.config = config;
  traj.final_v = state.V;
  traj.slots.resize(iterates.size());
  for (std::size_t j = 0; j < iterates.size(); ++j) {
    SlotRecord& rec = traj.slots[j];
    const ControllerIterate& it = iterates[j];
    rec.k = it.k;
    rec.t = it.t;
    rec.alpha = j == 0 ? 0.0 : config.schedule.at(static_cast<int>(j));
    rec.grad_norm = it.diag.grad_norm;
    rec.lambda = it.lambda;
    rec.y = it.y_sampled;
    rec.u = it.u;
    fill_voltage_stats(rec, it.V, problem.matrices);
    double err_sq = 0.0;
    for (int i = 0; i < n; ++i) {
      err_sq += (it.y_sampled[i].vec() - it.u[i].vec()).squaredNorm();
    }
    rec.tracking_err = std::sqrt(err_sq);
  }

  if (!opt.certify || horizon == 0) return traj;

  // Pass 2: fit the bound constants from the recorded trajectory. The 1.25
  // factor leaves headroom so the certificates test the *shape* of the bounds
  // rather than the fit itself.
  double g_max = 0.0;
  for (const ControllerIterate& it : iterates) g_max = std::max(g_max, it.diag.grad_norm);
  traj.bounds.G = 1.25 * std::max(g_max, 1e-12);

  const double ref_norm = reference_map_norm(problem.agent_costs);
  std::vector<LambdaTilde> tildes(iterates.size());
  double ratio_max = 0.0;
  for (std::size_t j = 1; j < iterates.size(); ++j) {
    tildes[j] = lambda_tilde(iterates[j].y_sampled, problem.agent_costs, problem.caps);
    const double alpha_j = config.schedule.at(static_cast<int>(j));
    if (tildes[j].all_identifiable()) {
      const double gap = (iterates[j - 1].lambda - tildes[j].value).norm();
      ratio_max = std::max(ratio_max, gap / (alpha_j * traj.bounds.G));
    }
    ratio_max = std::max(ratio_max, traj.slots[j].tracking_err /
                                        (ref_norm * traj.bounds.G * alpha_j));
  }
  traj.bounds.G_tilde = 1.25 * std::max(ratio_max, 1e-12);

  // Pass 3: certify. Epsilon is evaluated every slot; the probe inequalities
  // only on a stride (they cost one dual evaluation each).
  const int stride =
      opt.probe_stride > 0 ? opt.probe_stride : (horizon <= 500 ? 1 : 10);
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  for (std::size_t j = 1; j < iterates.size(); ++j) {
    SlotRecord& rec = traj.slots[j];
    const double alpha_j = rec.alpha;

    const TrackingCertificate tc = tracking_certificate(iterates[j], alpha_j,
                                                        problem.agent_costs, traj.bounds);
    rec.tracking_bound = tc.bound;
    rec.tracking_ok = tc.ok;

    if (!tildes[j].all_identifiable()) continue;

    // The sampled outputs of slot j entered the ascent from the previous
    // iterate, so the epsilon-subgradient claim is anchored there.
    ControllerIterate anchor;
    anchor.lambda = iterates[j - 1].lambda;
    anchor.V = iterates[j - 1].V;
    anchor.y_sampled = iterates[j].y_sampled;

    std::vector<Eigen::VectorXd> probes;
    if (static_cast<int>(j) % stride == 0 && opt.probe_count > 0) {
      probes.reserve(static_cast<std::size_t>(opt.probe_count) + 1);
      for (int p = 0; p < opt.probe_count; ++p) {
        Eigen::VectorXd probe = anchor.lambda;
        for (Eigen::Index r = 0; r < probe.size(); ++r) probe(r) += gauss(rng);
        probes.push_back(std::move(probe));
      }
      if (opt.extra_probe) probes.push_back(*opt.extra_probe);
    }

    const EpsilonCertificate cert = epsilon_certificate(
        problem, anchor, tildes[j].value, alpha_j, traj.bounds, probes);
    rec.epsilon_est = cert.epsilon;
    rec.epsilon_bound = cert.bound;
    rec.epsilon_nonneg_ok = cert.nonneg_ok;
    rec.epsilon_bound_ok = cert.bound_ok;
    rec.probes_ok = cert.probes_ok;
    traj.bounds.epsilon_history.push_back(cert.epsilon);
  }
  return traj;
}

OracleSolution oracle_solve(const ScenarioConfig& config, const OracleOptions& opt) {
  const BuiltScenario built = build_problem(config);
  const Problem& problem = built.problem;

  // Monotone gradient ascent on the concave dual function.  The regularized
  // subproblems are strictly convex, so the dual is differentiable with
  // gradient equal to the balance residual, and the dual value itself comes
  // for free from the iterates we already compute:
  //   q(lambda) = primal_cost(V, u) + <lambda, g(V, u)>.
  // A backtracked step is far more economical here than the controller's
  // diminishing schedule: the cold-start residual is orders of magnitude
  // above the fixed point's scale, and any open-loop stepsize either flings
  // the multiplier out or crawls once the residual has collapsed.
  Eigen::VectorXd lambda = built.lambda0;
  HermitianMatrix v = solve_v_subproblem(lambda, problem.matrices, problem.sdp_cost,
                                         problem.vset, problem.subproblem)
                          .V;
  std::vector<SetPoint> u = references(lambda, problem);
  Eigen::VectorXd g = balance_residual(v, u, problem.loads, problem.matrices);
  double q = problem.primal_cost(v, u) + lambda.dot(g);
  double balance = g.norm();

  double alpha = opt.initial_step / std::max(1.0, balance);
  std::vector<double> history;
  int k = 0;
  for (; k < opt.max_iter && balance >= opt.tol; ++k) {
    const Eigen::VectorXd lam_t = lambda + alpha * g;
    std::optional<SubproblemResult> trial;
    try {
      trial = solve_v_subproblem(lam_t, problem.matrices, problem.sdp_cost, problem.vset,
                                 problem.subproblem, &v);
    } catch (const ConvergenceError&) {
      // An overlong trial step can land the subproblem on a badly conditioned
      // multiplier; treat that exactly like a failed ascent test.
    }
    if (!trial) {
      alpha *= 0.25;
      history.push_back(balance);
      continue;
    }
    const HermitianMatrix& v_t = trial->V;
    const std::vector<SetPoint> u_t = references(lam_t, problem);
    const Eigen::VectorXd g_t = balance_residual(v_t, u_t, problem.loads, problem.matrices);
    const double q_t = problem.primal_cost(v_t, u_t) + lam_t.dot(g_t);
    // The dual values carry the subproblem tolerance as noise, so accept any
    // non-decrease up to that slack instead of demanding strict ascent.
    if (q_t >= q - 1e-9 * (1.0 + std::abs(q))) {
      lambda = lam_t;
      v = v_t;
      u = u_t;
      g = g_t;
      q = q_t;
      balance = g.norm();
      alpha *= 1.5;
    } else {
      alpha *= 0.25;
    }
    history.push_back(balance);
  }
  if (balance >= opt.tol) {
    std::ostringstream msg;
    msg << "oracle_solve: no fixed point after " << opt.max_iter
        << " iterations; residual tail:";
    for (std::size_t i = history.size() > 5 ? history.size() - 5 : 0; i < history.size(); ++i) {
      msg << ' ' << history[i];
    }
    throw ConvergenceError(msg.str(), balance);
  }

  OracleSolution sol;
  sol.lambda = lambda;
  sol.V = v;
  sol.u = u;
  sol.primal = problem.primal_cost(v, u);
  sol.dual = problem.dual(lambda, &v).q;
  sol.balance = balance;
  sol.rank_ratio = rank1_extract(v).ratio;
  sol.iterations = k + 1;
  return sol;
}

double KktReport::worst() const {
  double w = std::max(balance_norm, std::max(v_residual, v_membership));
  for (double g : fixed_point_gap) w = std::max(w, g);
  for (double m : u_membership) w = std::max(w, m);
  return w;
}

KktReport kkt_report(const HermitianMatrix& v, const std::vector<SetPoint>& u,
                     const Eigen::VectorXd& lambda, const Problem& problem) {
  if (static_cast<int>(u.size()) != problem.n_inv() ||
      lambda.size() != 2 * problem.n_inv()) {
    throw ContractViolation("kkt_report: size mismatch");
  }
  KktReport rep;
  rep.balance_norm = balance_residual(v, u, problem.loads, problem.matrices).norm();
  for (int i = 0; i < problem.n_inv(); ++i) {
    const SetPoint fixed = primal_u_update(lambda.segment<2>(2 * i), problem.agent_costs[i],
                                           problem.caps[i]);
    rep.fixed_point_gap.push_back(distance(u[i], fixed));
    rep.u_membership.push_back(distance(u[i], project(problem.caps[i], u[i])));
  }
  const ComplexMatrix grad = lagrangian_v_gradient(v, lambda, problem.matrices,
                                                   problem.sdp_cost);
  const HermitianMatrix stepped =
      project_voltage_set(HermitianMatrix::symmetrized(v.mat() - grad), problem.vset,
                          problem.subproblem.projection_tol, problem.subproblem.projection_max_iter);
  rep.v_residual = (v.mat() - stepped.mat()).norm();
  rep.v_membership = voltage_set_residual(v, problem.vset).total();
  return rep;
}

}  // namespace feedopf
