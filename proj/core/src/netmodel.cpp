#include "feedopf/netmodel.hpp"

#include <queue>

namespace feedopf {

void FeederModel::validate() const {
  if (node_count < 2) throw ModelError("FeederModel: need at least two nodes");
  bases.validate();
  if (!(vmin_pu > 0.0) || !(vmin_pu < vmax_pu)) {
    throw ModelError("FeederModel: need 0 < vmin < vmax");
  }
  if (static_cast<int>(loads.size()) != node_count - 1) {
    throw ModelError("FeederModel: loads must be given for every node 1..N");
  }
  for (const LineSegment& seg : segments) {
    seg.validate();
    if (seg.from < 0 || seg.from >= node_count || seg.to < 0 || seg.to >= node_count) {
      throw ModelError("FeederModel: segment endpoint out of range");
    }
  }
  // Connectivity over all nodes.
  std::vector<std::vector<int>> adj(node_count);
  for (const LineSegment& seg : segments) {
    adj[seg.from].push_back(seg.to);
    adj[seg.to].push_back(seg.from);
  }
  std::vector<bool> seen(node_count, false);
  std::queue<int> frontier;
  frontier.push(0);
  seen[0] = true;
  int visited = 1;
  while (!frontier.empty()) {
    const int n = frontier.front();
    frontier.pop();
    for (int m : adj[n]) {
      if (!seen[m]) {
        seen[m] = true;
        ++visited;
        frontier.push(m);
      }
    }
  }
  if (visited != node_count) throw ModelError("FeederModel: feeder graph is disconnected");
}

FeederModel to_per_unit(const FeederModel& feeder) {
  feeder.bases.validate();
  if (feeder.normalized) return feeder;
  FeederModel out = feeder;
  const double z_base = feeder.bases.z_ohm();
  const double s_base = feeder.bases.s_va;
  for (LineSegment& seg : out.segments) {
    seg.series_impedance /= z_base;
    seg.shunt_admittance *= z_base;
  }
  for (NodeLoad& load : out.loads) {
    load.p /= s_base;
    load.q /= s_base;
  }
  out.normalized = true;
  return out;
}

FeederModel to_si(const FeederModel& feeder) {
  feeder.bases.validate();
  if (!feeder.normalized) return feeder;
  FeederModel out = feeder;
  const double z_base = feeder.bases.z_ohm();
  const double s_base = feeder.bases.s_va;
  for (LineSegment& seg : out.segments) {
    seg.series_impedance *= z_base;
    seg.shunt_admittance /= z_base;
  }
  for (NodeLoad& load : out.loads) {
    load.p *= s_base;
    load.q *= s_base;
  }
  out.normalized = false;
  return out;
}

ComplexMatrix build_admittance(const FeederModel& feeder) {
  feeder.validate();
  const FeederModel pu = to_per_unit(feeder);
  const int n = pu.node_count;
  ComplexMatrix y = ComplexMatrix::Zero(n, n);
  for (const LineSegment& seg : pu.segments) {
    if (std::abs(seg.series_impedance) == 0.0) {
      throw ModelError("build_admittance: zero-impedance segment");
    }
    const std::complex<double> ys = 1.0 / seg.series_impedance;
    const std::complex<double> half_shunt = 0.5 * seg.shunt_admittance;
    y(seg.from, seg.to) -= ys;
    y(seg.to, seg.from) -= ys;
    y(seg.from, seg.from) += ys + half_shunt;
    y(seg.to, seg.to) += ys + half_shunt;
  }
  return y;
}

PowerFlowMatrices build_injection_matrices(const ComplexMatrix& y) {
  if (y.rows() != y.cols()) throw ContractViolation("build_injection_matrices: Y not square");
  const Eigen::Index n = y.rows();
  PowerFlowMatrices m;
  m.Y = y;
  m.phi.reserve(n);
  m.psi.reserve(n);
  m.upsilon.reserve(n);
  const std::complex<double> half_j(0.0, 0.5);
  for (Eigen::Index i = 0; i < n; ++i) {
    ComplexMatrix yi = ComplexMatrix::Zero(n, n);
    yi.row(i) = y.row(i);
    m.phi.push_back(HermitianMatrix::symmetrized(yi));
    m.psi.push_back(HermitianMatrix(ComplexMatrix(half_j * (yi - yi.adjoint()))));
    ComplexMatrix ei = ComplexMatrix::Zero(n, n);
    ei(i, i) = 1.0;
    m.upsilon.push_back(HermitianMatrix(std::move(ei)));
  }
  return m;
}

InjectedQuantities injected_quantities(const HermitianMatrix& v, const PowerFlowMatrices& m) {
  const Eigen::Index n = m.nodes();
  if (v.dim() != n) throw ContractViolation("injected_quantities: dimension mismatch");
  InjectedQuantities out;
  out.p_net.resize(n);
  out.q_net.resize(n);
  out.vmag_sq.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.p_net(i) = trace_real(m.phi[i].mat(), v.mat());
    out.q_net(i) = trace_real(m.psi[i].mat(), v.mat());
    out.vmag_sq(i) = v.mat()(i, i).real();
  }
  return out;
}

}  // namespace feedopf
