#pragma once

#include <Eigen/Dense>
#include <complex>

#include "feedopf/errors.hpp"

namespace feedopf {

using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

/// max_ij |M - M^H| entrywise.
double hermitian_defect(const ComplexMatrix& m);

/// Complex square matrix whose Hermitian invariant is checked at construction.
/// Entries are immutable after construction; all mutating algebra goes through
/// free functions returning fresh values.
class HermitianMatrix {
 public:
  static constexpr double kHermitianTol = 1e-12;

  /// Empty placeholder (dimension 0).
  HermitianMatrix() : m_(0, 0) {}

  /// Validates M == M^H within kHermitianTol (throws ContractViolation).
  explicit HermitianMatrix(ComplexMatrix m);

  /// Builds (M + M^H)/2; accepts any square matrix.
  static HermitianMatrix symmetrized(const ComplexMatrix& m);

  const ComplexMatrix& mat() const { return m_; }
  Eigen::Index dim() const { return m_.rows(); }
  double frobenius() const { return m_.norm(); }

 private:
  struct Trusted {};
  HermitianMatrix(Trusted, ComplexMatrix m) : m_(std::move(m)) {}
  ComplexMatrix m_;
};

/// Eigenvalues ascending, eigenvectors unitary; U diag(w) U^H reconstructs M.
struct SpectralDecomposition {
  Eigen::VectorXd eigenvalues;
  ComplexMatrix eigenvectors;
};

SpectralDecomposition eigh(const HermitianMatrix& m);

/// Frobenius-nearest positive semidefinite matrix (eigenvalue clamp).
HermitianMatrix project_psd(const HermitianMatrix& m);

struct Rank1Extraction {
  ComplexVector v;  ///< sqrt(w_max) * u_max, slack component real nonnegative
  double ratio;     ///< second-largest over largest eigenvalue (0 when n == 1)
};

/// Leading-eigenpair voltage recovery from an (approximately) rank-1 PSD matrix.
Rank1Extraction rank1_extract(const HermitianMatrix& v, Eigen::Index slack_index = 0);

/// Re Tr(A V). A and V same dimension.
double trace_real(const ComplexMatrix& a, const ComplexMatrix& v);

}  // namespace feedopf
