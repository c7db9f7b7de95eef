#pragma once

#include <optional>
#include <string>
#include <vector>

#include "feedopf/plant.hpp"
#include "feedopf/problem.hpp"

namespace feedopf {

enum class ScheduleKind { Harmonic, PaperSqrt, Custom };

/// Diminishing stepsize sequence alpha_k, indexed from k = 1.
struct StepsizeSchedule {
  ScheduleKind kind = ScheduleKind::Harmonic;
  double c = 1.0;
  std::vector<double> table;  ///< ScheduleKind::Custom only

  double at(int k) const;
};

/// Whether the non-summable/square-summable conditions provably hold for the
/// schedule kind. The verdicts are analytic (series tests), not empirical.
struct ScheduleValidation {
  bool s1 = false;  ///< gamma_k -> 0, sum gamma_k diverges
  bool s2 = false;  ///< gamma_k <= alpha_k <= eta_k
  bool s3 = false;  ///< eta_k -> 0, sum eta_k^2 converges
  std::string note;
  bool compliant() const { return s1 && s2 && s3; }
};

ScheduleValidation validate(const StepsizeSchedule& sched);

/// Reference update u_i = proj_Y(-A^{-1}C'lambda_i - A^{-1}b).
SetPoint primal_u_update(const Eigen::Vector2d& lambda_i, const QuadraticAgentCost& cost,
                         const InverterCapability& cap);

/// Per-node power-balance residual h_i(V) + C y_i + D d_i, stacked (P, Q) per
/// non-substation node.
Eigen::VectorXd balance_residual(const HermitianMatrix& v, const std::vector<SetPoint>& y,
                                 const std::vector<SetPoint>& loads,
                                 const PowerFlowMatrices& m);

/// lambda' = lambda + alpha (h(V) + C y + D d). No projection: the multipliers
/// of equality constraints are unconstrained.
Eigen::VectorXd dual_ascent(const Eigen::VectorXd& lambda, double alpha,
                            const HermitianMatrix& v, const std::vector<SetPoint>& y,
                            const std::vector<SetPoint>& loads, const PowerFlowMatrices& m);

/// The multiplier that would have produced the sampled outputs through the
/// reference map; identifiable only off the projection boundary.
struct LambdaTilde {
  Eigen::VectorXd value;
  std::vector<bool> identifiable;  ///< per inverter
  bool all_identifiable() const;
};

LambdaTilde lambda_tilde(const std::vector<SetPoint>& y,
                         const std::vector<QuadraticAgentCost>& costs,
                         const std::vector<InverterCapability>& caps,
                         double interior_margin = 1e-7);

/// Empirically calibrated constants for the subgradient-norm bound G and the
/// multiplier-tracking constant G_tilde.
struct BoundConstants {
  double G = 0.0;
  double G_tilde = 0.0;
  std::vector<double> epsilon_history;
};

struct Diagnostics {
  std::optional<double> epsilon_est;
  std::optional<double> epsilon_bound;
  double tracking_err = 0.0;
  double tracking_bound = 0.0;
  double grad_norm = 0.0;
  bool epsilon_nonneg_ok = true;
  bool epsilon_bound_ok = true;
  bool probes_ok = true;
  bool tracking_ok = true;
};

struct ControllerIterate {
  int k = 0;
  double t = 0.0;
  Eigen::VectorXd lambda;
  HermitianMatrix V;
  std::vector<SetPoint> u;
  std::vector<SetPoint> y_sampled;
  Diagnostics diag;
};

/// epsilon-subgradient certificate for one slot: the error definition, the
/// nonnegativity and 2*alpha*G_tilde*G^2 bound checks, and the subgradient inequality on
/// each probe multiplier.
struct EpsilonCertificate {
  double epsilon = 0.0;
  double bound = 0.0;      ///< 2 alpha_k G_tilde G^2
  bool nonneg_ok = false;
  bool bound_ok = false;
  bool probes_ok = false;
  int probes_checked = 0;
};

EpsilonCertificate epsilon_certificate(const Problem& problem, const ControllerIterate& iter,
                                       const Eigen::VectorXd& lambda_tilde_value, double alpha_k,
                                       const BoundConstants& bounds,
                                       const std::vector<Eigen::VectorXd>& probes,
                                       const HermitianMatrix* warm = nullptr);

/// Output-tracking bound ||y - u|| <= ||A^{-1}C'||_2 G_tilde G alpha_k.
struct TrackingCertificate {
  double tracking_err = 0.0;
  double bound = 0.0;
  bool ok = false;
};

TrackingCertificate tracking_certificate(const ControllerIterate& iter, double alpha_k,
                                         const std::vector<QuadraticAgentCost>& costs,
                                         const BoundConstants& bounds);

/// Spectral norm of the block-diagonal map -A^{-1}C' (max over inverters).
double reference_map_norm(const std::vector<QuadraticAgentCost>& costs);

/// One controller slot applied in order: sample, dual ascent, V update,
/// reference update, command. `force_ideal` replaces the sampled outputs with
/// the previous references (exact time-scale separation).
struct StepOptions {
  double dt = 0.0;
  bool force_ideal = false;
};

void step_closed_loop(ControllerIterate& state, PlantState& plant, const PlantModel& model,
                      const Problem& problem, const StepsizeSchedule& schedule,
                      const StepOptions& opt);

}  // namespace feedopf
