#include "feedopf/export.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"

namespace feedopf {

using nlohmann::json;

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double opt_or_nan(const std::optional<double>& v) {
  return v ? *v : std::numeric_limits<double>::quiet_NaN();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("export: cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw ConfigError("export: write to '" + path + "' failed");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("export: cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

json slot_values(const SlotRecord& s, double kw) {
  json row;
  row["k"] = s.k;
  row["t_seconds"] = s.t;
  row["alpha_k"] = s.alpha;
  row["grad_norm"] = s.grad_norm;
  row["inverters"] = json::array();
  for (std::size_t i = 0; i < s.y.size(); ++i) {
    row["inverters"].push_back({{"p_kw", s.y[i].p * kw},
                                {"q_kvar", s.y[i].q * kw},
                                {"u_p_kw", s.u[i].p * kw},
                                {"u_q_kvar", s.u[i].q * kw},
                                {"lambda_p", s.lambda(2 * static_cast<Eigen::Index>(i))},
                                {"lambda_q", s.lambda(2 * static_cast<Eigen::Index>(i) + 1)}});
  }
  row["epsilon_est"] = opt_or_nan(s.epsilon_est);
  row["epsilon_bound"] = opt_or_nan(s.epsilon_bound);
  row["tracking_err"] = s.tracking_err;
  row["tracking_bound"] = s.tracking_bound;
  row["substation_p_kw"] = s.substation_p * kw;
  row["v_rank_ratio"] = s.v_rank_ratio;
  row["min_vmag_pu"] = s.min_vmag;
  row["max_vmag_pu"] = s.max_vmag;
  return row;
}

}  // namespace

std::string trajectory_to_csv(const TrajectoryRecord& traj) {
  const double kw = traj.config.feeder.bases.s_va / 1000.0;  // pu -> kW / kVAr
  std::ostringstream out;
  out << "# config " << json::parse(scenario_to_json(traj.config)).dump() << "\n";
  out << "# bases s_va=" << fmt(traj.config.feeder.bases.s_va)
      << " v_volts=" << fmt(traj.config.feeder.bases.v_volts) << "\n";
  out << "# bounds G=" << fmt(traj.bounds.G) << " G_tilde=" << fmt(traj.bounds.G_tilde)
      << " rho=" << fmt(traj.config.sdp_cost.rho) << "\n";

  const std::size_t n = traj.config.inverters.size();
  out << "k,t_seconds,alpha_k,grad_norm";
  for (std::size_t i = 1; i <= n; ++i) {
    out << ",p_kw_" << i << ",q_kvar_" << i << ",u_p_kw_" << i << ",u_q_kvar_" << i
        << ",lambda_p_" << i << ",lambda_q_" << i;
  }
  out << ",epsilon_est,epsilon_bound,tracking_err,tracking_bound,substation_p_kw,"
         "v_rank_ratio,min_vmag_pu,max_vmag_pu\n";

  for (const SlotRecord& s : traj.slots) {
    out << s.k << ',' << fmt(s.t) << ',' << fmt(s.alpha) << ',' << fmt(s.grad_norm);
    for (std::size_t i = 0; i < n; ++i) {
      out << ',' << fmt(s.y[i].p * kw) << ',' << fmt(s.y[i].q * kw) << ','
          << fmt(s.u[i].p * kw) << ',' << fmt(s.u[i].q * kw) << ','
          << fmt(s.lambda(2 * static_cast<Eigen::Index>(i))) << ','
          << fmt(s.lambda(2 * static_cast<Eigen::Index>(i) + 1));
    }
    out << ',' << fmt(opt_or_nan(s.epsilon_est)) << ',' << fmt(opt_or_nan(s.epsilon_bound))
        << ',' << fmt(s.tracking_err) << ',' << fmt(s.tracking_bound) << ','
        << fmt(s.substation_p * kw) << ',' << fmt(s.v_rank_ratio) << ','
        << fmt(s.min_vmag) << ',' << fmt(s.max_vmag) << '\n';
  }
  return out.str();
}

std::string trajectory_to_json(const TrajectoryRecord& traj) {
  const double kw = traj.config.feeder.bases.s_va / 1000.0;
  json j;
  j["config"] = json::parse(scenario_to_json(traj.config));
  j["bounds"] = {{"G", traj.bounds.G}, {"G_tilde", traj.bounds.G_tilde}};
  j["slots"] = json::array();
  for (const SlotRecord& s : traj.slots) j["slots"].push_back(slot_values(s, kw));
  return j.dump(2);
}

void export_trajectory(const TrajectoryRecord& traj, const std::string& path,
                       ExportFormat format) {
  write_file(path, format == ExportFormat::Csv ? trajectory_to_csv(traj)
                                               : trajectory_to_json(traj));
}

int ParsedTrajectory::column(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == name) return static_cast<int>(i);
  }
  return -1;
}

ParsedTrajectory parse_trajectory_csv(const std::string& text) {
  ParsedTrajectory parsed;
  std::istringstream in(text);
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.rfind("# ", 0) == 0) {
      parsed.metadata.push_back(line.substr(2));
      continue;
    }
    std::istringstream cells(line);
    std::string cell;
    if (!header_seen) {
      while (std::getline(cells, cell, ',')) parsed.columns.push_back(cell);
      header_seen = true;
      continue;
    }
    std::vector<double> row;
    row.reserve(parsed.columns.size());
    while (std::getline(cells, cell, ',')) {
      try {
        row.push_back(cell == "nan" ? std::numeric_limits<double>::quiet_NaN()
                                    : std::stod(cell));
      } catch (const std::exception&) {
        throw ConfigError("trajectory CSV: bad numeric cell '" + cell + "'");
      }
    }
    if (row.size() != parsed.columns.size()) {
      throw ConfigError("trajectory CSV: row width does not match the header");
    }
    parsed.rows.push_back(std::move(row));
  }
  if (!header_seen) throw ConfigError("trajectory CSV: missing header row");
  return parsed;
}

ParsedTrajectory load_trajectory_csv(const std::string& path) {
  return parse_trajectory_csv(read_file(path));
}

std::string solution_to_json(const OracleSolution& sol, const PerUnitBases& bases) {
  json j;
  j["bases"] = {{"s_va", bases.s_va}, {"v_volts", bases.v_volts}};
  j["lambda"] = std::vector<double>(sol.lambda.data(), sol.lambda.data() + sol.lambda.size());
  j["u_pu"] = json::array();
  for (const SetPoint& u : sol.u) j["u_pu"].push_back({u.p, u.q});
  j["v"] = json::array();
  for (Eigen::Index r = 0; r < sol.V.dim(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < sol.V.dim(); ++c) {
      row.push_back({sol.V.mat()(r, c).real(), sol.V.mat()(r, c).imag()});
    }
    j["v"].push_back(row);
  }
  j["primal"] = sol.primal;
  j["dual"] = sol.dual;
  j["balance"] = sol.balance;
  j["rank_ratio"] = sol.rank_ratio;
  j["iterations"] = sol.iterations;
  return j.dump(2);
}

OracleSolution solution_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("solution JSON: parse error: ") + e.what());
  }
  OracleSolution sol;
  const auto& jl = j.at("lambda");
  sol.lambda.resize(static_cast<Eigen::Index>(jl.size()));
  for (Eigen::Index i = 0; i < sol.lambda.size(); ++i) sol.lambda(i) = jl[i].get<double>();
  for (const auto& ju : j.at("u_pu")) {
    sol.u.push_back({ju[0].get<double>(), ju[1].get<double>()});
  }
  const auto& jv = j.at("v");
  ComplexMatrix v(jv.size(), jv.size());
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    for (Eigen::Index c = 0; c < v.cols(); ++c) {
      v(r, c) = {jv[r][c][0].get<double>(), jv[r][c][1].get<double>()};
    }
  }
  sol.V = HermitianMatrix::symmetrized(v);
  sol.primal = j.at("primal").get<double>();
  sol.dual = j.at("dual").get<double>();
  sol.balance = j.at("balance").get<double>();
  sol.rank_ratio = j.at("rank_ratio").get<double>();
  sol.iterations = j.at("iterations").get<int>();
  return sol;
}

void export_solution(const OracleSolution& sol, const PerUnitBases& bases,
                     const std::string& path) {
  write_file(path, solution_to_json(sol, bases));
}

OracleSolution load_solution(const std::string& path) {
  return solution_from_json(read_file(path));
}

}  // namespace feedopf
