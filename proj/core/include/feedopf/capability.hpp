#pragma once

#include <Eigen/Dense>
#include <limits>
#include <vector>

#include "feedopf/errors.hpp"

namespace feedopf {

/// Commanded or measured (P, Q) pair, per-unit.
struct SetPoint {
  double p = 0.0;
  double q = 0.0;

  Eigen::Vector2d vec() const { return {p, q}; }
  static SetPoint from(const Eigen::Vector2d& v) { return {v(0), v(1)}; }
};

inline double distance(const SetPoint& a, const SetPoint& b) {
  return std::hypot(a.p - b.p, a.q - b.q);
}

/// Inverter operating region: 0 <= P <= p_av, P^2 + Q^2 <= s_rating^2,
/// |Q| <= tan_theta * P. tan_theta == +inf disables the power-factor cone.
struct InverterCapability {
  double p_av = 0.0;
  double s_rating = 0.0;
  double tan_theta = std::numeric_limits<double>::infinity();

  bool cone_enabled() const { return std::isfinite(tan_theta); }

  void validate() const {
    if (!(p_av >= 0.0) || !(p_av <= s_rating)) {
      throw ConfigError("InverterCapability: need 0 <= p_av <= s_rating");
    }
    if (!(tan_theta >= 0.0)) {
      throw ConfigError("InverterCapability: need tan_theta >= 0");
    }
  }

  /// Largest |Q| allowed at active power p (disk and cone limits).
  double q_limit(double p) const {
    const double disk_sq = s_rating * s_rating - p * p;
    double lim = disk_sq > 0.0 ? std::sqrt(disk_sq) : 0.0;
    if (cone_enabled()) lim = std::min(lim, tan_theta * p);
    return lim;
  }
};

bool contains(const InverterCapability& cap, const SetPoint& pt, double tol = 0.0);

/// All constraints satisfied with slack of at least `margin`.
bool strictly_interior(const InverterCapability& cap, const SetPoint& pt, double margin);

/// Exact Euclidean projection onto the capability region (finite candidate
/// enumeration over the boundary pieces; ties broken by smaller p, then |q|).
SetPoint project(const InverterCapability& cap, const SetPoint& pt);

/// argmin over the region of (1/2) u^T A u + c^T u, A symmetric positive
/// definite. project() is the A = I, c = -pt special case.
SetPoint minimize_quadratic(const InverterCapability& cap, const Eigen::Matrix2d& a,
                            const Eigen::Vector2d& c);

}  // namespace feedopf
