#pragma once

#include <vector>

#include "feedopf/capability.hpp"

namespace feedopf {

/// First-order inverter power dynamics, one time constant per inverter
/// (shared by the P and Q channels).
struct PlantModel {
  std::vector<double> tau_s;

  void validate() const {
    for (double t : tau_s) {
      if (!(t > 0.0)) throw ConfigError("PlantModel: time constants must be positive");
    }
  }
};

struct PlantState {
  double t = 0.0;                ///< seconds
  std::vector<SetPoint> x;       ///< per-inverter (P, Q)
};

/// Exact zero-order-hold solution y(t+dt) = u + (y(t) - u) exp(-dt/tau),
/// per channel. No integration error.
PlantState evolve(const PlantState& state, const std::vector<SetPoint>& u, double dt,
                  const PlantModel& model);

/// y_i = x_i: the measurement is the state itself.
std::vector<SetPoint> sample(const PlantState& state);

}  // namespace feedopf
