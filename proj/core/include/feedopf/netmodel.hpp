#pragma once

#include <complex>
#include <vector>

#include "feedopf/capability.hpp"
#include "feedopf/hermitian.hpp"

namespace feedopf {

/// Pi-model two-terminal line: series impedance plus total shunt admittance
/// (split half per end).
struct LineSegment {
  int from = 0;
  int to = 0;
  std::complex<double> series_impedance;   ///< ohms (or pu when normalized)
  std::complex<double> shunt_admittance;   ///< siemens (or pu), total

  void validate() const {
    if (from == to) throw ModelError("LineSegment: from == to");
    if (!(series_impedance.real() > 0.0)) {
      throw ModelError("LineSegment: series impedance needs a strictly positive real part");
    }
  }
};

struct PerUnitBases {
  double s_va = 0.0;
  double v_volts = 0.0;
  double z_ohm() const { return v_volts * v_volts / s_va; }
  void validate() const {
    if (!(s_va > 0.0) || !(v_volts > 0.0)) {
      throw ConfigError("PerUnitBases: bases must be positive");
    }
  }
};

struct NodeLoad {
  double p = 0.0;  ///< watts, or pu when normalized
  double q = 0.0;  ///< VAr, or pu when normalized
};

/// Balanced radial/meshed feeder; node 0 is the substation (slack).
struct FeederModel {
  int node_count = 0;
  std::vector<LineSegment> segments;
  std::vector<NodeLoad> loads;  ///< one per node 1..N
  PerUnitBases bases;
  double vmin_pu = 0.0;
  double vmax_pu = 0.0;
  double slack_magnitude_pu = 1.0;
  bool normalized = false;  ///< impedances/loads already per-unit

  int inverter_count() const { return node_count - 1; }
  void validate() const;  ///< invariants incl. connectivity
};

/// Impedances scaled by V_base^2/S_base, powers by S_base. Idempotent: a model
/// already flagged normalized comes back unchanged.
FeederModel to_per_unit(const FeederModel& feeder);

/// Inverse of to_per_unit (back to ohms/watts).
FeederModel to_si(const FeederModel& feeder);

/// Per-unit bus admittance matrix from the pi-model segments.
ComplexMatrix build_admittance(const FeederModel& feeder);

/// Per-node injection matrices: Phi_i = (Y_i + Y_i^H)/2, Psi_i = j(Y_i - Y_i^H)/2,
/// Upsilon_i = e_i e_i^T, with Y_i = e_i e_i^T Y.
struct PowerFlowMatrices {
  ComplexMatrix Y;
  std::vector<HermitianMatrix> phi;
  std::vector<HermitianMatrix> psi;
  std::vector<HermitianMatrix> upsilon;

  Eigen::Index nodes() const { return Y.rows(); }
};

PowerFlowMatrices build_injection_matrices(const ComplexMatrix& y);

/// p_net[i] = Tr(Phi_i V), q_net[i] = Tr(Psi_i V), vmag_sq[i] = Tr(Upsilon_i V).
struct InjectedQuantities {
  Eigen::VectorXd p_net;
  Eigen::VectorXd q_net;
  Eigen::VectorXd vmag_sq;
};

InjectedQuantities injected_quantities(const HermitianMatrix& v, const PowerFlowMatrices& m);

}  // namespace feedopf
