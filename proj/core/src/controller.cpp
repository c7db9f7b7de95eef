#include "feedopf/controller.hpp"

#include <cmath>

namespace feedopf {

double StepsizeSchedule::at(int k) const {
  if (k < 1) throw ContractViolation("StepsizeSchedule: alpha is indexed from k = 1");
  switch (kind) {
    case ScheduleKind::Harmonic:
      return c / static_cast<double>(k);
    case ScheduleKind::PaperSqrt:
      return c / std::sqrt(static_cast<double>(k));
    case ScheduleKind::Custom:
      if (table.empty()) throw ConfigError("StepsizeSchedule: empty custom table");
      return k <= static_cast<int>(table.size()) ? table[k - 1] : table.back();
  }
  throw ConfigError("StepsizeSchedule: unknown kind");
}

ScheduleValidation validate(const StepsizeSchedule& sched) {
  ScheduleValidation v;
  if (!(sched.c > 0.0) && sched.kind != ScheduleKind::Custom) {
    v.note = "scale c must be positive";
    return v;
  }
  switch (sched.kind) {
    case ScheduleKind::Harmonic:
      v.s1 = v.s2 = v.s3 = true;
      v.note = "c/k: sum c/k diverges, sum (c/k)^2 = c^2 pi^2/6 converges";
      break;
    case ScheduleKind::PaperSqrt:
      v.s1 = v.s2 = true;
      v.s3 = false;
      v.note = "c/sqrt(k): sum of squares is c^2 sum 1/k, which diverges (harmonic series)";
      break;
    case ScheduleKind::Custom: {
      bool positive = !sched.table.empty();
      bool nonincreasing = true;
      for (std::size_t i = 0; i < sched.table.size(); ++i) {
        positive = positive && sched.table[i] > 0.0;
        if (i > 0 && sched.table[i] > sched.table[i - 1]) nonincreasing = false;
      }
      v.s2 = positive && nonincreasing;
      v.s1 = v.s3 = false;
      v.note = "finite table: asymptotic series conditions not provable";
      break;
    }
  }
  return v;
}

SetPoint primal_u_update(const Eigen::Vector2d& lambda_i, const QuadraticAgentCost& cost,
                         const InverterCapability& cap) {
  const Eigen::Matrix2d a_inv = cost.A.inverse();
  if (!a_inv.allFinite()) throw ConfigError("primal_u_update: singular agent cost matrix");
  const Eigen::Vector2d target = -a_inv * QuadraticAgentCost::C().transpose() * lambda_i -
                                 a_inv * cost.b;
  return project(cap, SetPoint::from(target));
}

Eigen::VectorXd balance_residual(const HermitianMatrix& v, const std::vector<SetPoint>& y,
                                 const std::vector<SetPoint>& loads,
                                 const PowerFlowMatrices& m) {
  const Eigen::Index n = m.nodes();
  if (static_cast<Eigen::Index>(y.size()) != n - 1 ||
      static_cast<Eigen::Index>(loads.size()) != n - 1) {
    throw ContractViolation("balance_residual: size mismatch");
  }
  Eigen::VectorXd r(2 * (n - 1));
  for (Eigen::Index i = 1; i < n; ++i) {
    const double p_net = trace_real(m.phi[i].mat(), v.mat());
    const double q_net = trace_real(m.psi[i].mat(), v.mat());
    r(2 * (i - 1)) = p_net - y[i - 1].p + loads[i - 1].p;
    r(2 * (i - 1) + 1) = q_net - y[i - 1].q + loads[i - 1].q;
  }
  return r;
}

Eigen::VectorXd dual_ascent(const Eigen::VectorXd& lambda, double alpha,
                            const HermitianMatrix& v, const std::vector<SetPoint>& y,
                            const std::vector<SetPoint>& loads, const PowerFlowMatrices& m) {
  return lambda + alpha * balance_residual(v, y, loads, m);
}

bool LambdaTilde::all_identifiable() const {
  for (bool f : identifiable) {
    if (!f) return false;
  }
  return true;
}

LambdaTilde lambda_tilde(const std::vector<SetPoint>& y,
                         const std::vector<QuadraticAgentCost>& costs,
                         const std::vector<InverterCapability>& caps, double interior_margin) {
  if (y.size() != costs.size() || y.size() != caps.size()) {
    throw ContractViolation("lambda_tilde: size mismatch");
  }
  LambdaTilde out;
  out.value.resize(2 * static_cast<Eigen::Index>(y.size()));
  out.identifiable.resize(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    // Off the boundary the reference map inverts uniquely:
    // lambda~ = -C^{-T} (A y + b) = A y + b for C = -I.
    out.value.segment<2>(2 * static_cast<Eigen::Index>(i)) =
        costs[i].A * y[i].vec() + costs[i].b;
    out.identifiable[i] = strictly_interior(caps[i], y[i], interior_margin);
  }
  return out;
}

EpsilonCertificate epsilon_certificate(const Problem& problem, const ControllerIterate& iter,
                                       const Eigen::VectorXd& lambda_tilde_value, double alpha_k,
                                       const BoundConstants& bounds,
                                       const std::vector<Eigen::VectorXd>& probes,
                                       const HermitianMatrix* warm) {
  const Eigen::VectorXd s_y =
      balance_residual(iter.V, iter.y_sampled, problem.loads, problem.matrices);
  const HermitianMatrix* start = warm != nullptr ? warm : &iter.V;
  const DualValueResult q_at = problem.dual(iter.lambda, start);
  const DualValueResult q_tilde = problem.dual(lambda_tilde_value, &q_at.V);

  EpsilonCertificate cert;
  cert.epsilon = q_tilde.q - q_at.q + s_y.dot(iter.lambda - lambda_tilde_value);
  cert.bound = 2.0 * alpha_k * bounds.G_tilde * bounds.G * bounds.G;
  cert.nonneg_ok = cert.epsilon >= -1e-8;
  cert.bound_ok = cert.epsilon <= cert.bound + 1e-8;
  cert.probes_ok = true;
  for (const Eigen::VectorXd& probe : probes) {
    const DualValueResult q_probe = problem.dual(probe, &q_at.V);
    const double lhs = s_y.dot(probe - iter.lambda);
    const double rhs = q_probe.q - q_at.q - cert.epsilon;
    if (lhs < rhs - 1e-6) cert.probes_ok = false;
    ++cert.probes_checked;
  }
  return cert;
}

double reference_map_norm(const std::vector<QuadraticAgentCost>& costs) {
  double norm = 0.0;
  for (const QuadraticAgentCost& cost : costs) {
    const Eigen::Matrix2d map = -cost.A.inverse() * QuadraticAgentCost::C().transpose();
    norm = std::max(norm, map.jacobiSvd().singularValues()(0));
  }
  return norm;
}

TrackingCertificate tracking_certificate(const ControllerIterate& iter, double alpha_k,
                                         const std::vector<QuadraticAgentCost>& costs,
                                         const BoundConstants& bounds) {
  TrackingCertificate cert;
  double err_sq = 0.0;
  for (std::size_t i = 0; i < iter.u.size(); ++i) {
    const Eigen::Vector2d d = iter.y_sampled[i].vec() - iter.u[i].vec();
    err_sq += d.squaredNorm();
  }
  cert.tracking_err = std::sqrt(err_sq);
  cert.bound = reference_map_norm(costs) * bounds.G_tilde * bounds.G * alpha_k;
  cert.ok = cert.tracking_err <= cert.bound + 1e-8;
  return cert;
}

void step_closed_loop(ControllerIterate& state, PlantState& plant, const PlantModel& model,
                      const Problem& problem, const StepsizeSchedule& schedule,
                      const StepOptions& opt) {
  // Sample the plant outputs (or force exact tracking).
  const std::vector<SetPoint> y = opt.force_ideal ? state.u : sample(plant);

  // Dual ascent from the sampled outputs.
  const double alpha = schedule.at(state.k + 1);
  const Eigen::VectorXd grad = balance_residual(state.V, y, problem.loads, problem.matrices);
  state.lambda += alpha * grad;

  // V-block update, warm-started from the previous iterate.
  SubproblemResult sub = solve_v_subproblem(state.lambda, problem.matrices, problem.sdp_cost,
                                            problem.vset, problem.subproblem, &state.V);
  state.V = std::move(sub.V);

  // Reference update per inverter.
  for (int i = 0; i < problem.n_inv(); ++i) {
    state.u[i] = primal_u_update(state.lambda.segment<2>(2 * i), problem.agent_costs[i],
                                 problem.caps[i]);
  }

  // Command the new references, held over the whole slot.
  plant = evolve(plant, state.u, opt.dt, model);

  state.y_sampled = y;
  state.k += 1;
  state.t += opt.dt;
  state.diag = Diagnostics{};
  state.diag.grad_norm = grad.norm();
}

}  // namespace feedopf
