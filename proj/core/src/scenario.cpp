#include "feedopf/scenario.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace feedopf {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError("scenario: " + path + ": " + what);
}

void reject_unknown(const json& j, const std::set<std::string>& allowed,
                    const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.contains(key)) fail(path + "." + key, "unknown key");
  }
}

double get_number(const json& j, const std::string& key, const std::string& path) {
  if (!j.contains(key)) fail(path + "." + key, "missing");
  if (!j[key].is_number()) fail(path + "." + key, "expected a number");
  return j[key].get<double>();
}

double get_number_or(const json& j, const std::string& key, double fallback) {
  return j.contains(key) ? j[key].get<double>() : fallback;
}

std::complex<double> get_complex(const json& j, const std::string& key,
                                 const std::string& path) {
  if (!j.contains(key) || !j[key].is_array() || j[key].size() != 2) {
    fail(path + "." + key, "expected [re, im]");
  }
  return {j[key][0].get<double>(), j[key][1].get<double>()};
}

FeederModel parse_feeder(const json& j, const std::string& path) {
  reject_unknown(j, {"node_count", "bases", "voltage_limits_pu", "slack_magnitude_pu",
                     "segments", "loads"},
                 path);
  FeederModel f;
  f.node_count = static_cast<int>(get_number(j, "node_count", path));
  if (!j.contains("bases")) fail(path + ".bases", "missing");
  reject_unknown(j["bases"], {"s_va", "v_volts"}, path + ".bases");
  f.bases.s_va = get_number(j["bases"], "s_va", path + ".bases");
  f.bases.v_volts = get_number(j["bases"], "v_volts", path + ".bases");
  if (!j.contains("voltage_limits_pu") || !j["voltage_limits_pu"].is_array() ||
      j["voltage_limits_pu"].size() != 2) {
    fail(path + ".voltage_limits_pu", "expected [vmin, vmax]");
  }
  f.vmin_pu = j["voltage_limits_pu"][0].get<double>();
  f.vmax_pu = j["voltage_limits_pu"][1].get<double>();
  f.slack_magnitude_pu = get_number_or(j, "slack_magnitude_pu", 1.0);
  if (!j.contains("segments") || !j["segments"].is_array()) {
    fail(path + ".segments", "expected an array");
  }
  int seg_idx = 0;
  for (const json& js : j["segments"]) {
    const std::string sp = path + ".segments[" + std::to_string(seg_idx++) + "]";
    reject_unknown(js, {"from", "to", "series_impedance_ohm", "shunt_admittance_s"}, sp);
    LineSegment seg;
    seg.from = static_cast<int>(get_number(js, "from", sp));
    seg.to = static_cast<int>(get_number(js, "to", sp));
    seg.series_impedance = get_complex(js, "series_impedance_ohm", sp);
    if (js.contains("shunt_admittance_s")) {
      seg.shunt_admittance = get_complex(js, "shunt_admittance_s", sp);
    }
    f.segments.push_back(seg);
  }
  if (!j.contains("loads") || !j["loads"].is_array()) fail(path + ".loads", "expected an array");
  f.loads.assign(std::max(0, f.node_count - 1), NodeLoad{});
  int load_idx = 0;
  for (const json& jl : j["loads"]) {
    const std::string lp = path + ".loads[" + std::to_string(load_idx++) + "]";
    reject_unknown(jl, {"node", "p_w", "q_var"}, lp);
    const int node = static_cast<int>(get_number(jl, "node", lp));
    if (node < 1 || node >= f.node_count) fail(lp + ".node", "out of range 1..N");
    f.loads[node - 1].p = get_number(jl, "p_w", lp);
    f.loads[node - 1].q = get_number(jl, "q_var", lp);
  }
  return f;
}

StepsizeSchedule parse_schedule(const json& j, const std::string& path) {
  reject_unknown(j, {"kind", "c", "table"}, path);
  StepsizeSchedule s;
  const std::string kind = j.value("kind", "harmonic");
  if (kind == "harmonic") {
    s.kind = ScheduleKind::Harmonic;
  } else if (kind == "paper-sqrt") {
    s.kind = ScheduleKind::PaperSqrt;
  } else if (kind == "custom") {
    s.kind = ScheduleKind::Custom;
    if (!j.contains("table") || !j["table"].is_array()) fail(path + ".table", "missing");
    for (const json& v : j["table"]) s.table.push_back(v.get<double>());
  } else {
    fail(path + ".kind", "expected harmonic | paper-sqrt | custom");
  }
  s.c = get_number_or(j, "c", 1.0);
  return s;
}

double parse_sampling(const json& j, double tau_s, const std::string& path) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    try {
      return parse_sampling_spec(j.get<std::string>(), tau_s);
    } catch (const ConfigError& e) {
      fail(path, e.what());
    }
  }
  fail(path, "expected seconds or '<m>x-tau'");
}

}  // namespace

double parse_sampling_spec(const std::string& spec, double tau_s) {
  const auto pos = spec.find("x-tau");
  try {
    std::size_t used = 0;
    if (pos != std::string::npos && pos > 0 && pos + 5 == spec.size()) {
      const double mult = std::stod(spec.substr(0, pos), &used);
      if (used == pos) return mult * tau_s;
    } else {
      const double seconds = std::stod(spec, &used);
      if (used == spec.size()) return seconds;
    }
  } catch (const std::exception&) {
  }
  throw ConfigError("sampling: expected seconds or '<m>x-tau', got '" + spec + "'");
}

int ScenarioConfig::resolved_slots() const {
  if (slots >= 0) return slots;
  // Matched simulated-time span: 60 slots at 9 tau (540 tau total).
  if (sampling_interval_s <= 0.0) return 60;
  return std::max(1, static_cast<int>(std::lround(540.0 * tau_s / sampling_interval_s)));
}

void ScenarioConfig::validate() const {
  feeder.validate();
  if (static_cast<int>(inverters.size()) != feeder.inverter_count()) {
    throw ConfigError("scenario: inverters must cover every node 1..N");
  }
  for (const auto& cap : inverters) cap.validate();
  if (agent_costs.size() != inverters.size()) {
    throw ConfigError("scenario: agent costs must cover every inverter");
  }
  for (const auto& cost : agent_costs) cost.validate();
  sdp_cost.validate();
  if (!(tau_s > 0.0)) throw ConfigError("scenario: plant.tau_s must be positive");
  if (!(sampling_interval_s > 0.0)) throw ConfigError("scenario: sampling interval must be positive");
  if (lambda0.size() != 0 &&
      lambda0.size() != static_cast<Eigen::Index>(2 * inverters.size())) {
    throw ConfigError("scenario: lambda0 must have one (P,Q) pair per inverter");
  }
}

ScenarioConfig paper_5node() {
  ScenarioConfig cfg;
  cfg.name = "paper-5node";
  cfg.feeder.node_count = 6;
  cfg.feeder.bases = {10'000.0, 240.0};
  cfg.feeder.vmin_pu = 0.95;
  cfg.feeder.vmax_pu = 1.05;
  cfg.feeder.slack_magnitude_pu = 1.0;
  for (int n = 0; n < 5; ++n) {
    cfg.feeder.segments.push_back({n, n + 1, {0.0135, 0.0045}, {0.0, 0.0}});
  }
  const double loads_p[] = {1100.0, 1100.0, 1100.0, 1090.0, 1100.0};
  const double loads_q[] = {826.0, 828.0, 829.0, 821.0, 830.0};
  const double ratings[] = {4660.0, 4830.0, 7620.0, 7620.0, 7620.0};
  const double available[] = {1910.0, 1950.0, 3240.0, 3240.0, 3240.0};
  for (int i = 0; i < 5; ++i) {
    cfg.feeder.loads.push_back({loads_p[i], loads_q[i]});
    InverterCapability cap;
    cap.s_rating = ratings[i];
    cap.p_av = available[i];
    cfg.inverters.push_back(cap);
    QuadraticAgentCost cost;
    cost.A << 1.0, 0.0, 0.0, 0.01;
    cost.b << 10.0, 0.1;
    cfg.agent_costs.push_back(cost);
  }
  cfg.sdp_cost = {2.0, 10.0, 1e-6};
  cfg.schedule = {ScheduleKind::PaperSqrt, 0.1, {}};
  cfg.tau_s = 1.1;
  cfg.sampling_interval_s = 9.0 * cfg.tau_s;
  cfg.seed = 1;
  cfg.initial_v = InitialV::Identity;
  return cfg;
}

ScenarioConfig parse_scenario(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scenario: JSON parse error: ") + e.what());
  }
  reject_unknown(j, {"name", "feeder", "inverters", "agent_cost", "sdp_cost", "schedule",
                     "plant", "sampling", "slots", "seed", "initial", "output", "tolerances"},
                 "$");

  ScenarioConfig cfg;
  cfg.name = j.value("name", "custom");
  if (!j.contains("feeder")) fail("$.feeder", "missing");
  cfg.feeder = parse_feeder(j["feeder"], "$.feeder");

  if (!j.contains("inverters") || !j["inverters"].is_array()) {
    fail("$.inverters", "expected an array");
  }
  cfg.inverters.assign(std::max(0, cfg.feeder.node_count - 1), InverterCapability{});
  int inv_idx = 0;
  for (const json& ji : j["inverters"]) {
    const std::string ip = "$.inverters[" + std::to_string(inv_idx++) + "]";
    reject_unknown(ji, {"node", "s_rating_va", "p_available_w", "tan_theta"}, ip);
    const int node = static_cast<int>(get_number(ji, "node", ip));
    if (node < 1 || node >= cfg.feeder.node_count) fail(ip + ".node", "out of range 1..N");
    InverterCapability cap;
    cap.s_rating = get_number(ji, "s_rating_va", ip);
    cap.p_av = get_number(ji, "p_available_w", ip);
    if (ji.contains("tan_theta") && !ji["tan_theta"].is_null()) {
      cap.tan_theta = ji["tan_theta"].get<double>();
    }
    cfg.inverters[node - 1] = cap;
  }

  if (j.contains("agent_cost")) {
    reject_unknown(j["agent_cost"], {"A", "b"}, "$.agent_cost");
    QuadraticAgentCost cost;
    const json& ja = j["agent_cost"];
    if (!ja.contains("A") || !ja["A"].is_array() || ja["A"].size() != 2) {
      fail("$.agent_cost.A", "expected a 2x2 matrix");
    }
    for (int r = 0; r < 2; ++r) {
      for (int col = 0; col < 2; ++col) cost.A(r, col) = ja["A"][r][col].get<double>();
    }
    if (!ja.contains("b") || !ja["b"].is_array() || ja["b"].size() != 2) {
      fail("$.agent_cost.b", "expected a 2-vector");
    }
    cost.b << ja["b"][0].get<double>(), ja["b"][1].get<double>();
    cfg.agent_costs.assign(cfg.inverters.size(), cost);
  }

  if (j.contains("sdp_cost")) {
    reject_unknown(j["sdp_cost"], {"a", "b", "rho"}, "$.sdp_cost");
    cfg.sdp_cost.a = get_number(j["sdp_cost"], "a", "$.sdp_cost");
    cfg.sdp_cost.b = get_number(j["sdp_cost"], "b", "$.sdp_cost");
    cfg.sdp_cost.rho = get_number_or(j["sdp_cost"], "rho", 1e-6);
  }

  if (j.contains("schedule")) cfg.schedule = parse_schedule(j["schedule"], "$.schedule");

  if (j.contains("plant")) {
    reject_unknown(j["plant"], {"tau_s"}, "$.plant");
    cfg.tau_s = get_number(j["plant"], "tau_s", "$.plant");
  }
  if (!j.contains("sampling")) fail("$.sampling", "missing");
  cfg.sampling_interval_s = parse_sampling(j["sampling"], cfg.tau_s, "$.sampling");
  if (j.contains("slots")) cfg.slots = j["slots"].get<int>();
  if (j.contains("seed")) cfg.seed = j["seed"].get<unsigned long long>();

  if (j.contains("initial")) {
    reject_unknown(j["initial"], {"v", "lambda"}, "$.initial");
    const std::string v = j["initial"].value("v", "identity");
    if (v == "identity") {
      cfg.initial_v = InitialV::Identity;
    } else if (v == "argmin") {
      cfg.initial_v = InitialV::Argmin;
    } else {
      fail("$.initial.v", "expected identity | argmin");
    }
    if (j["initial"].contains("lambda")) {
      const json& jl = j["initial"]["lambda"];
      const Eigen::Index dim = 2 * static_cast<Eigen::Index>(cfg.inverters.size());
      if (jl.is_number()) {
        cfg.lambda0 = Eigen::VectorXd::Constant(dim, jl.get<double>());
      } else if (jl.is_array()) {
        if (static_cast<Eigen::Index>(jl.size()) != dim) fail("$.initial.lambda", "wrong length");
        cfg.lambda0.resize(dim);
        for (Eigen::Index i = 0; i < dim; ++i) cfg.lambda0(i) = jl[i].get<double>();
      } else {
        fail("$.initial.lambda", "expected number or array");
      }
    }
  }
  if (j.contains("output")) cfg.output_path = j["output"].get<std::string>();
  if (j.contains("tolerances")) {
    reject_unknown(j["tolerances"], {"subproblem", "projection"}, "$.tolerances");
    cfg.subproblem.tol = get_number_or(j["tolerances"], "subproblem", cfg.subproblem.tol);
    cfg.subproblem.projection_tol = get_number_or(j["tolerances"], "projection", cfg.subproblem.projection_tol);
  }

  cfg.validate();
  return cfg;
}

ScenarioConfig load_scenario(const std::string& path_or_name) {
  if (path_or_name == "paper-5node") return paper_5node();
  std::ifstream in(path_or_name);
  if (!in) throw ConfigError("scenario: cannot open '" + path_or_name + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

std::string scenario_to_json(const ScenarioConfig& cfg) {
  json j;
  j["name"] = cfg.name;
  json& jf = j["feeder"];
  jf["node_count"] = cfg.feeder.node_count;
  jf["bases"] = {{"s_va", cfg.feeder.bases.s_va}, {"v_volts", cfg.feeder.bases.v_volts}};
  jf["voltage_limits_pu"] = {cfg.feeder.vmin_pu, cfg.feeder.vmax_pu};
  jf["slack_magnitude_pu"] = cfg.feeder.slack_magnitude_pu;
  jf["segments"] = json::array();
  for (const LineSegment& s : cfg.feeder.segments) {
    jf["segments"].push_back(
        {{"from", s.from},
         {"to", s.to},
         {"series_impedance_ohm", {s.series_impedance.real(), s.series_impedance.imag()}},
         {"shunt_admittance_s", {s.shunt_admittance.real(), s.shunt_admittance.imag()}}});
  }
  jf["loads"] = json::array();
  for (std::size_t i = 0; i < cfg.feeder.loads.size(); ++i) {
    jf["loads"].push_back({{"node", static_cast<int>(i + 1)},
                           {"p_w", cfg.feeder.loads[i].p},
                           {"q_var", cfg.feeder.loads[i].q}});
  }
  j["inverters"] = json::array();
  for (std::size_t i = 0; i < cfg.inverters.size(); ++i) {
    json ji = {{"node", static_cast<int>(i + 1)},
               {"s_rating_va", cfg.inverters[i].s_rating},
               {"p_available_w", cfg.inverters[i].p_av}};
    if (cfg.inverters[i].cone_enabled()) {
      ji["tan_theta"] = cfg.inverters[i].tan_theta;
    } else {
      ji["tan_theta"] = nullptr;
    }
    j["inverters"].push_back(ji);
  }
  if (!cfg.agent_costs.empty()) {
    const QuadraticAgentCost& c = cfg.agent_costs.front();
    j["agent_cost"] = {{"A", {{c.A(0, 0), c.A(0, 1)}, {c.A(1, 0), c.A(1, 1)}}},
                       {"b", {c.b(0), c.b(1)}}};
  }
  j["sdp_cost"] = {{"a", cfg.sdp_cost.a}, {"b", cfg.sdp_cost.b}, {"rho", cfg.sdp_cost.rho}};
  switch (cfg.schedule.kind) {
    case ScheduleKind::Harmonic:
      j["schedule"] = {{"kind", "harmonic"}, {"c", cfg.schedule.c}};
      break;
    case ScheduleKind::PaperSqrt:
      j["schedule"] = {{"kind", "paper-sqrt"}, {"c", cfg.schedule.c}};
      break;
    case ScheduleKind::Custom:
      j["schedule"] = {{"kind", "custom"}, {"table", cfg.schedule.table}};
      break;
  }
  j["plant"] = {{"tau_s", cfg.tau_s}};
  j["sampling"] = cfg.sampling_interval_s;
  j["slots"] = cfg.resolved_slots();
  j["seed"] = cfg.seed;
  j["initial"] = {{"v", cfg.initial_v == InitialV::Identity ? "identity" : "argmin"}};
  if (cfg.lambda0.size() > 0) {
    j["initial"]["lambda"] = std::vector<double>(cfg.lambda0.data(),
                                                 cfg.lambda0.data() + cfg.lambda0.size());
  }
  if (!cfg.output_path.empty()) j["output"] = cfg.output_path;
  j["tolerances"] = {{"subproblem", cfg.subproblem.tol}, {"projection", cfg.subproblem.projection_tol}};
  return j.dump(2);
}

BuiltScenario build_problem(const ScenarioConfig& cfg) {
  cfg.validate();
  BuiltScenario out;
  const FeederModel pu = to_per_unit(cfg.feeder);
  out.problem.matrices = build_injection_matrices(build_admittance(pu));
  out.problem.vset = {pu.vmin_pu * pu.vmin_pu, pu.vmax_pu * pu.vmax_pu, 0,
                      pu.slack_magnitude_pu * pu.slack_magnitude_pu};
  out.problem.sdp_cost = cfg.sdp_cost;
  const double s_base = cfg.feeder.bases.s_va;
  for (std::size_t i = 0; i < cfg.inverters.size(); ++i) {
    InverterCapability cap = cfg.inverters[i];
    cap.s_rating /= s_base;
    cap.p_av /= s_base;
    out.problem.caps.push_back(cap);
    out.problem.loads.push_back({pu.loads[i].p, pu.loads[i].q});
  }
  out.problem.agent_costs = cfg.agent_costs;
  out.problem.subproblem = cfg.subproblem;
  out.problem.validate();
  out.plant.tau_s.assign(cfg.inverters.size(), cfg.tau_s);
  out.lambda0 = cfg.lambda0.size() > 0
                    ? cfg.lambda0
                    : Eigen::VectorXd::Zero(2 * static_cast<Eigen::Index>(cfg.inverters.size()));
  return out;
}

}  // namespace feedopf
