#pragma once

#include <vector>

#include "feedopf/agent.hpp"
#include "feedopf/capability.hpp"
#include "feedopf/netmodel.hpp"
#include "feedopf/sdp.hpp"
#include "feedopf/voltage_set.hpp"

namespace feedopf {

/// All static data of the steady-state optimization problem, per-unit:
/// the network matrices, the voltage set, the SDP-side cost, and the
/// per-inverter capability sets, agent costs and loads.
struct Problem {
  PowerFlowMatrices matrices;
  VoltageSet vset;
  SdpCost sdp_cost;
  std::vector<InverterCapability> caps;
  std::vector<QuadraticAgentCost> agent_costs;
  std::vector<SetPoint> loads;  ///< exogenous d_i = (P_load, Q_load)
  SubproblemOptions subproblem;

  int n_inv() const { return static_cast<int>(caps.size()); }

  void validate() const {
    vset.validate();
    sdp_cost.validate();
    const auto n = static_cast<std::size_t>(matrices.nodes() - 1);
    if (caps.size() != n || agent_costs.size() != n || loads.size() != n) {
      throw ConfigError("Problem: per-inverter data must cover every non-substation node");
    }
    for (const auto& c : caps) c.validate();
    for (const auto& a : agent_costs) a.validate();
  }

  /// Objective of (P1): H(V) + regularizer + per-inverter agent costs.
  double primal_cost(const HermitianMatrix& v, const std::vector<SetPoint>& u) const {
    const double t = trace_real(matrices.phi[0].mat(), v.mat());
    double cost = 0.5 * sdp_cost.a * t * t + sdp_cost.b * t +
                  0.5 * sdp_cost.rho * v.mat().squaredNorm();
    for (std::size_t i = 0; i < u.size(); ++i) {
      cost += agent_costs[i].value(u[i].vec());
    }
    return cost;
  }

  DualValueResult dual(const Eigen::VectorXd& lambda,
                       const HermitianMatrix* warm = nullptr) const {
    return dual_value(lambda, matrices, sdp_cost, vset, caps, agent_costs, loads, subproblem,
                      warm);
  }
};

}  // namespace feedopf
