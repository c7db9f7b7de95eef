#pragma once

#include "feedopf/hermitian.hpp"

namespace feedopf {

/// The feasible region of the voltage outer-product matrix: the PSD cone
/// intersected with per-node squared-magnitude bounds and a pinned slack entry.
struct VoltageSet {
  double vmin_sq = 0.0;
  double vmax_sq = 0.0;
  Eigen::Index slack_index = 0;
  double slack_sq = 1.0;

  void validate() const {
    if (!(vmin_sq > 0.0) || !(vmin_sq <= vmax_sq)) {
      throw ConfigError("VoltageSet: need 0 < vmin_sq <= vmax_sq");
    }
    if (!(vmin_sq <= slack_sq && slack_sq <= vmax_sq)) {
      throw ConfigError("VoltageSet: slack_sq outside [vmin_sq, vmax_sq]");
    }
  }
};

/// Projection onto the diagonal box with the slack entry pinned.
HermitianMatrix clamp_diagonal(const HermitianMatrix& m, const VoltageSet& vs);

/// How far M sits outside the set: max(negative eigenvalue excess, box excess).
struct MembershipResidual {
  double psd;       ///< max(0, -lambda_min)
  double box;       ///< max diagonal excess outside [vmin_sq, vmax_sq] / slack pin
  double total() const { return psd > box ? psd : box; }
};
MembershipResidual voltage_set_residual(const HermitianMatrix& m, const VoltageSet& vs);

/// Frobenius projection onto the intersection, computed through the dual of
/// the diagonal constraints (semismooth Newton over one multiplier per node,
/// PSD projection as the inner map). Terminates when the joint feasibility/
/// complementarity residual drops below tol; throws ConvergenceError at
/// max_iter.
HermitianMatrix project_voltage_set(const HermitianMatrix& m, const VoltageSet& vs,
                                    double tol = 1e-9, int max_iter = 50000);

}  // namespace feedopf
