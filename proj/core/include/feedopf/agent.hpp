#pragma once

#include <Eigen/Dense>

#include "feedopf/errors.hpp"

namespace feedopf {

/// Per-inverter strictly convex cost (1/2) u^T A u + b^T u with the constraint
/// coupling g_i(u, d) = C u + D d, C = -I and D = I fixed by the power-balance
/// mapping.
struct QuadraticAgentCost {
  Eigen::Matrix2d A = Eigen::Matrix2d::Identity();
  Eigen::Vector2d b = Eigen::Vector2d::Zero();

  static Eigen::Matrix2d C() { return -Eigen::Matrix2d::Identity(); }
  static Eigen::Matrix2d D() { return Eigen::Matrix2d::Identity(); }

  void validate() const {
    if ((A - A.transpose()).norm() > 1e-12) {
      throw ConfigError("QuadraticAgentCost: A must be symmetric");
    }
    const Eigen::Vector2d w = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(A).eigenvalues();
    if (!(w.minCoeff() > 0.0)) {
      throw ConfigError("QuadraticAgentCost: A must be positive definite");
    }
  }

  double value(const Eigen::Vector2d& u) const { return 0.5 * u.dot(A * u) + b.dot(u); }
};

}  // namespace feedopf
