#pragma once

#include <optional>
#include <vector>

#include "feedopf/agent.hpp"
#include "feedopf/capability.hpp"
#include "feedopf/netmodel.hpp"
#include "feedopf/voltage_set.hpp"

namespace feedopf {

/// Network-side cost H(V) = (a/2) Tr(Phi_0 V)^2 + b Tr(Phi_0 V), plus an
/// optional Frobenius regularizer making the minimizer unique.
struct SdpCost {
  double a = 0.0;
  double b = 0.0;
  double rho = 1e-6;

  void validate() const {
    if (!(a > 0.0) || !(b >= 0.0) || !(rho >= 0.0)) {
      throw ConfigError("SdpCost: need a > 0, b >= 0, rho >= 0");
    }
  }
};

struct SubproblemOptions {
  double tol = 1e-7;       ///< projected-gradient residual target
  int max_iter = 20000;
  double projection_tol = 1e-9;
  int projection_max_iter = 50000;
};

struct SubproblemResult {
  HermitianMatrix V;
  double objective;   ///< H(V) + lambda'h(V) + (rho/2)||V||_F^2
  double residual;    ///< ||V - Proj(V - grad)||_F at return
  int iterations;
};

/// Lagrangian objective of the V-block at multiplier lambda (length 2N, one
/// (P, Q) pair per non-substation node).
double v_objective(const HermitianMatrix& v, const Eigen::VectorXd& lambda,
                   const PowerFlowMatrices& m, const SdpCost& cost);

/// Minimizes the V-block of the Lagrangian over the voltage set by projected
/// gradient with Armijo backtracking; Dykstra supplies the projection.
SubproblemResult solve_v_subproblem(const Eigen::VectorXd& lambda, const PowerFlowMatrices& m,
                                    const SdpCost& cost, const VoltageSet& vs,
                                    const SubproblemOptions& opt = {},
                                    const HermitianMatrix* warm_start = nullptr);

struct DualValueResult {
  double q;                 ///< dual function value
  HermitianMatrix V;        ///< minimizing V
  std::vector<SetPoint> u;  ///< minimizing per-inverter setpoints
};

/// Dual function q(lambda): the V-block minimum plus, per inverter, the exact
/// minimum of (1/2)u'Au + b'u + lambda_i'(Cu + Dd_i) over the capability set.
DualValueResult dual_value(const Eigen::VectorXd& lambda, const PowerFlowMatrices& m,
                           const SdpCost& cost, const VoltageSet& vs,
                           const std::vector<InverterCapability>& caps,
                           const std::vector<QuadraticAgentCost>& agent_costs,
                           const std::vector<SetPoint>& loads,
                           const SubproblemOptions& opt = {},
                           const HermitianMatrix* warm_start = nullptr);

}  // namespace feedopf
