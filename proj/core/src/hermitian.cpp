#include "feedopf/hermitian.hpp"

#include <Eigen/Eigenvalues>
#include <sstream>

namespace feedopf {

double hermitian_defect(const ComplexMatrix& m) {
  return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

HermitianMatrix::HermitianMatrix(ComplexMatrix m) : m_(std::move(m)) {
  if (m_.rows() != m_.cols()) {
    throw ContractViolation("HermitianMatrix: matrix is not square");
  }
  const double defect = hermitian_defect(m_);
  if (defect > kHermitianTol) {
    std::ostringstream os;
    os << "HermitianMatrix: defect " << defect << " exceeds tolerance " << kHermitianTol;
    throw ContractViolation(os.str());
  }
  // Remove the sub-tolerance skew so downstream algebra sees an exact Hermitian.
  m_ = 0.5 * (m_ + m_.adjoint()).eval();
}

HermitianMatrix HermitianMatrix::symmetrized(const ComplexMatrix& m) {
  if (m.rows() != m.cols()) {
    throw ContractViolation("HermitianMatrix::symmetrized: matrix is not square");
  }
  return HermitianMatrix(Trusted{}, 0.5 * (m + m.adjoint()));
}

SpectralDecomposition eigh(const HermitianMatrix& m) {
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(m.mat());
  if (solver.info() != Eigen::Success) {
    std::ostringstream os;
    os << "eigh: eigensolver failed to converge on matrix:\n" << m.mat();
    throw NumericalError(os.str());
  }
  return {solver.eigenvalues(), solver.eigenvectors()};
}

HermitianMatrix project_psd(const HermitianMatrix& m) {
  auto [w, u] = eigh(m);
  const Eigen::VectorXd clamped = w.cwiseMax(0.0);
  ComplexMatrix out = u * clamped.asDiagonal() * u.adjoint();
  return HermitianMatrix::symmetrized(out);
}

Rank1Extraction rank1_extract(const HermitianMatrix& v, Eigen::Index slack_index) {
  const auto n = v.dim();
  if (slack_index < 0 || slack_index >= n) {
    throw ContractViolation("rank1_extract: slack index out of range");
  }
  auto [w, u] = eigh(v);  // ascending
  const double w_max = w(n - 1);
  if (w_max <= 0.0) {
    throw NumericalError("rank1_extract: leading eigenvalue is nonpositive");
  }
  ComplexVector vec = std::sqrt(w_max) * u.col(n - 1);
  // Pin the global phase so the slack component is real nonnegative.
  const std::complex<double> s = vec(slack_index);
  if (std::abs(s) > 0.0) {
    vec *= std::conj(s) / std::abs(s);
  }
  const double ratio = (n > 1) ? w(n - 2) / w_max : 0.0;
  return {std::move(vec), ratio};
}

double trace_real(const ComplexMatrix& a, const ComplexMatrix& v) {
  if (a.rows() != v.rows() || a.cols() != v.cols()) {
    throw ContractViolation("trace_real: dimension mismatch");
  }
  // Tr(A V) = sum_ij A_ij V_ji
  return (a.transpose().cwiseProduct(v)).sum().real();
}

}  // namespace feedopf
