#pragma once

#include <string>
#include <vector>

#include "feedopf/controller.hpp"
#include "feedopf/netmodel.hpp"
#include "feedopf/problem.hpp"

namespace feedopf {

enum class InitialV { Identity, Argmin };

/// Fully resolved run description. Electrical quantities are stored in SI as
/// configured; build_problem() converts to per-unit on the feeder bases.
struct ScenarioConfig {
  std::string name = "custom";
  FeederModel feeder;                        ///< SI units
  std::vector<InverterCapability> inverters; ///< VA / W, node order 1..N
  std::vector<QuadraticAgentCost> agent_costs;
  SdpCost sdp_cost;
  StepsizeSchedule schedule{ScheduleKind::PaperSqrt, 0.1, {}};
  double tau_s = 1.1;
  double sampling_interval_s = 0.0;   ///< resolved, seconds
  int slots = -1;                     ///< negative: derived from the sampling cadence
  unsigned long long seed = 1;
  InitialV initial_v = InitialV::Identity;
  Eigen::VectorXd lambda0;            ///< empty means zeros
  SubproblemOptions subproblem;
  std::string output_path;

  int resolved_slots() const;
  void validate() const;
};

/// Built-in reference case: a 6-node chain feeder with five inverter nodes,
/// fixed loads, ratings, impedances, costs, stepsize and time constant.
ScenarioConfig paper_5node();

/// Loads a scenario by built-in name ("paper-5node") or from a JSON file.
/// Unknown keys are rejected; errors carry the offending field path.
ScenarioConfig load_scenario(const std::string& path_or_name);

/// Parses the JSON text of a scenario.
ScenarioConfig parse_scenario(const std::string& json_text);

/// Sampling cadence spec: plain seconds ("2.5") or a multiple of the plant
/// time constant ("9x-tau").
double parse_sampling_spec(const std::string& spec, double tau_s);

/// Serialized form (also embedded in trajectory exports).
std::string scenario_to_json(const ScenarioConfig& config);

/// Per-unit problem data plus the plant model for the configured scenario.
struct BuiltScenario {
  Problem problem;
  PlantModel plant;
  Eigen::VectorXd lambda0;
};

BuiltScenario build_problem(const ScenarioConfig& config);

}  // namespace feedopf
