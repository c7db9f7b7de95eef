#pragma once

#include <string>
#include <vector>

#include "feedopf/runner.hpp"

namespace feedopf {

enum class ExportFormat { Csv, Json };

/// CSV text: "# "-prefixed metadata (resolved config, bases, fitted bound
/// constants), a header row, then one row per slot. Powers are exported in
/// kW/kVAr on the recorded bases; multipliers stay per-unit. Columns:
/// k, t_seconds, alpha_k, grad_norm, per inverter (p_kw, q_kvar, u_p_kw,
/// u_q_kvar, lambda_p, lambda_q), then epsilon_est, epsilon_bound,
/// tracking_err, tracking_bound, substation_p_kw, v_rank_ratio, min_vmag_pu,
/// max_vmag_pu.
std::string trajectory_to_csv(const TrajectoryRecord& traj);

/// Same content as the CSV, field names spelled out.
std::string trajectory_to_json(const TrajectoryRecord& traj);

void export_trajectory(const TrajectoryRecord& traj, const std::string& path,
                       ExportFormat format);

/// Parsed CSV: metadata lines (without the "# " prefix), the header names and
/// the numeric table. Absent certificates read back as NaN.
struct ParsedTrajectory {
  std::vector<std::string> metadata;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  int column(const std::string& name) const;  ///< -1 when missing
};

ParsedTrajectory parse_trajectory_csv(const std::string& text);
ParsedTrajectory load_trajectory_csv(const std::string& path);

std::string solution_to_json(const OracleSolution& sol, const PerUnitBases& bases);
OracleSolution solution_from_json(const std::string& text);
void export_solution(const OracleSolution& sol, const PerUnitBases& bases,
                     const std::string& path);
OracleSolution load_solution(const std::string& path);

}  // namespace feedopf
