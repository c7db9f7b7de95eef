#include "feedopf/plant.hpp"

#include <cmath>

namespace feedopf {

PlantState evolve(const PlantState& state, const std::vector<SetPoint>& u, double dt,
                  const PlantModel& model) {
  if (u.size() != state.x.size() || model.tau_s.size() != state.x.size()) {
    throw ContractViolation("plant evolve: size mismatch");
  }
  if (!(dt >= 0.0)) throw ContractViolation("plant evolve: dt must be nonnegative");
  model.validate();
  PlantState out = state;
  out.t = state.t + dt;
  for (std::size_t i = 0; i < state.x.size(); ++i) {
    const double decay = std::exp(-dt / model.tau_s[i]);
    out.x[i].p = u[i].p + (state.x[i].p - u[i].p) * decay;
    out.x[i].q = u[i].q + (state.x[i].q - u[i].q) * decay;
  }
  return out;
}

std::vector<SetPoint> sample(const PlantState& state) { return state.x; }

}  // namespace feedopf
