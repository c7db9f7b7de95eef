#pragma once

#include <optional>
#include <string>
#include <vector>

#include "feedopf/controller.hpp"
#include "feedopf/scenario.hpp"

namespace feedopf {

/// One exported slot: the controller iterate flattened plus certificates.
struct SlotRecord {
  int k = 0;
  double t = 0.0;        ///< seconds
  double alpha = 0.0;    ///< stepsize used to reach this iterate (0 at k = 0)
  double grad_norm = 0.0;
  Eigen::VectorXd lambda;
  std::vector<SetPoint> y;  ///< sampled outputs, per-unit
  std::vector<SetPoint> u;  ///< commanded references, per-unit
  std::optional<double> epsilon_est;
  std::optional<double> epsilon_bound;
  bool epsilon_nonneg_ok = true;
  bool epsilon_bound_ok = true;
  bool probes_ok = true;
  double tracking_err = 0.0;
  double tracking_bound = 0.0;
  bool tracking_ok = true;
  double substation_p = 0.0;    ///< Tr(Phi_0 V), per-unit
  double v_rank_ratio = 0.0;
  double min_vmag = 0.0;        ///< sqrt(min diag V), pu
  double max_vmag = 0.0;
};

struct TrajectoryRecord {
  ScenarioConfig config;     ///< resolved configuration that produced the run
  BoundConstants bounds;     ///< fitted G, G_tilde and the epsilon history
  std::vector<SlotRecord> slots;  ///< slot 0 is the initial state
  HermitianMatrix final_v;

  bool certificates_ok() const;
};

struct RunOptions {
  bool certify = true;
  int probe_count = 16;            ///< Gaussian probes per certified slot
  int probe_stride = 0;            ///< 0: every slot up to 500, else every 10th
  std::optional<Eigen::VectorXd> extra_probe;  ///< e.g. the oracle multiplier
  bool force_ideal = false;        ///< replace samples with the references
};

/// Runs the closed loop for the configured horizon, then (optionally) fits the
/// bound constants from the recorded trajectory and certifies the slots in a
/// second pass. Deterministic for a given config and seed.
TrajectoryRecord run_closed_loop(const ScenarioConfig& config, const RunOptions& opt = {});

struct OracleOptions {
  int max_iter = 50000;
  double tol = 1e-6;        ///< on the balance residual norm
  double initial_step = 2.0; ///< rescaled by the initial residual norm inside the solve
};

struct OracleSolution {
  Eigen::VectorXd lambda;
  HermitianMatrix V;
  std::vector<SetPoint> u;  ///< per-unit
  double primal = 0.0;
  double dual = 0.0;
  double balance = 0.0;     ///< ||h(V) + C u + D d||
  double rank_ratio = 0.0;
  int iterations = 0;
};

/// Time-scale-separated ground truth: the exact dual iteration (references fed
/// straight back, no plant) run to a fixed point under a harmonic schedule.
OracleSolution oracle_solve(const ScenarioConfig& config, const OracleOptions& opt = {});

/// Stationarity and feasibility residuals of a candidate (V, u, lambda).
struct KktReport {
  double balance_norm = 0.0;
  std::vector<double> fixed_point_gap;  ///< per inverter
  double v_residual = 0.0;              ///< projected-gradient residual at V
  double v_membership = 0.0;
  std::vector<double> u_membership;     ///< distance to the capability region

  double worst() const;
};

KktReport kkt_report(const HermitianMatrix& v, const std::vector<SetPoint>& u,
                     const Eigen::VectorXd& lambda, const Problem& problem);

}  // namespace feedopf
