#include "feedopf/capability.hpp"

#include <algorithm>
#include <cmath>

namespace feedopf {

namespace {

double quad_obj(const Eigen::Matrix2d& a, const Eigen::Vector2d& c, const SetPoint& u) {
  const Eigen::Vector2d x = u.vec();
  return 0.5 * x.dot(a * x) + c.dot(x);
}

/// Pull a near-boundary candidate back into the set so rounding noise never
/// produces an infeasible winner.
SetPoint clamp_into(const InverterCapability& cap, SetPoint u) {
  u.p = std::min(std::max(u.p, 0.0), cap.p_av);
  const double ql = cap.q_limit(u.p);
  u.q = std::min(std::max(u.q, -ql), ql);
  return u;
}

/// 1-D minimization of g over [lo, hi] by dense sampling plus golden-section
/// refinement around the best sample.
template <typename F>
double minimize_scalar(F&& g, double lo, double hi, int samples = 256) {
  if (!(hi > lo)) return lo;
  double best_x = lo, best_v = g(lo);
  for (int i = 1; i <= samples; ++i) {
    const double x = lo + (hi - lo) * static_cast<double>(i) / samples;
    const double v = g(x);
    if (v < best_v) {
      best_v = v;
      best_x = x;
    }
  }
  const double step = (hi - lo) / samples;
  double a = std::max(lo, best_x - step);
  double b = std::min(hi, best_x + step);
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - invphi * (b - a);
  double x2 = a + invphi * (b - a);
  double f1 = g(x1), f2 = g(x2);
  for (int it = 0; it < 90 && (b - a) > 1e-15; ++it) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - invphi * (b - a);
      f1 = g(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + invphi * (b - a);
      f2 = g(x2);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace

bool contains(const InverterCapability& cap, const SetPoint& pt, double tol) {
  if (pt.p < -tol || pt.p > cap.p_av + tol) return false;
  if (std::hypot(pt.p, pt.q) > cap.s_rating + tol) return false;
  if (cap.cone_enabled() && std::abs(pt.q) > cap.tan_theta * pt.p + tol) return false;
  return true;
}

bool strictly_interior(const InverterCapability& cap, const SetPoint& pt, double margin) {
  if (pt.p < margin || pt.p > cap.p_av - margin) return false;
  if (std::hypot(pt.p, pt.q) > cap.s_rating - margin) return false;
  if (cap.cone_enabled() && std::abs(pt.q) > cap.tan_theta * pt.p - margin) return false;
  return true;
}

SetPoint minimize_quadratic(const InverterCapability& cap, const Eigen::Matrix2d& a,
                            const Eigen::Vector2d& c) {
  cap.validate();
  std::vector<SetPoint> candidates;
  candidates.reserve(16);

  // Unconstrained stationary point.
  {
    const Eigen::Vector2d u = a.ldlt().solve(-c);
    const SetPoint pt{u(0), u(1)};
    if (contains(cap, pt, 1e-13)) candidates.push_back(clamp_into(cap, pt));
  }

  const double s = cap.s_rating;
  const double qa = cap.q_limit(cap.p_av);

  // Edge P = 0 (the cone collapses it to the vertex).
  if (cap.cone_enabled()) {
    candidates.push_back({0.0, 0.0});
  } else {
    const double q_star = a(1, 1) > 0.0 ? -c(1) / a(1, 1) : 0.0;
    candidates.push_back({0.0, std::clamp(q_star, -s, s)});
    candidates.push_back({0.0, s});
    candidates.push_back({0.0, -s});
  }

  // Edge P = p_av.
  {
    const double q_star = a(1, 1) > 0.0 ? -(c(1) + a(0, 1) * cap.p_av) / a(1, 1) : 0.0;
    candidates.push_back(clamp_into(cap, {cap.p_av, std::clamp(q_star, -qa, qa)}));
    candidates.push_back(clamp_into(cap, {cap.p_av, qa}));
    candidates.push_back(clamp_into(cap, {cap.p_av, -qa}));
  }

  // Cone rays Q = +-tan_theta * P.
  if (cap.cone_enabled()) {
    for (const double sign : {1.0, -1.0}) {
      const double norm = std::sqrt(1.0 + cap.tan_theta * cap.tan_theta);
      const Eigen::Vector2d dir(1.0 / norm, sign * cap.tan_theta / norm);
      const double curv = dir.dot(a * dir);
      const double t_max = std::min(s, cap.p_av * norm);
      const double t_star = curv > 0.0 ? -c.dot(dir) / curv : 0.0;
      const double t = std::clamp(t_star, 0.0, t_max);
      candidates.push_back(clamp_into(cap, SetPoint::from(t * dir)));
      candidates.push_back(clamp_into(cap, SetPoint::from(t_max * dir)));
    }
    candidates.push_back({0.0, 0.0});
  }

  // Disk arc |u| = s, split into the positive- and negative-Q halves.
  if (s > 0.0) {
    const double phi_in = std::acos(std::clamp(cap.p_av / s, -1.0, 1.0));
    double phi_out = M_PI / 2.0;
    if (cap.cone_enabled()) phi_out = std::min(phi_out, std::atan(cap.tan_theta));
    if (phi_out > phi_in) {
      auto arc_obj = [&](double phi) {
        return quad_obj(a, c, {s * std::cos(phi), s * std::sin(phi)});
      };
      const double phi_pos = minimize_scalar(arc_obj, phi_in, phi_out);
      const double phi_neg = minimize_scalar(arc_obj, -phi_out, -phi_in);
      candidates.push_back(clamp_into(cap, {s * std::cos(phi_pos), s * std::sin(phi_pos)}));
      candidates.push_back(clamp_into(cap, {s * std::cos(phi_neg), s * std::sin(phi_neg)}));
    }
    // Disk/cone and disk/box corners.
    candidates.push_back(clamp_into(cap, {std::min(cap.p_av, s), 0.0}));
  }
  candidates.push_back({0.0, 0.0});

  // Pick the feasible candidate of least objective; break near-ties toward
  // smaller p, then smaller |q|, for cross-platform determinism.
  const double tie = 1e-12 * (1.0 + std::abs(c.norm()) + a.norm());
  SetPoint best = candidates.front();
  double best_v = quad_obj(a, c, best);
  for (const SetPoint& cand : candidates) {
    const double v = quad_obj(a, c, cand);
    if (v < best_v - tie) {
      best = cand;
      best_v = v;
    } else if (v <= best_v + tie) {
      if (cand.p < best.p - 1e-15 ||
          (std::abs(cand.p - best.p) <= 1e-15 && std::abs(cand.q) < std::abs(best.q))) {
        best = cand;
        best_v = std::min(best_v, v);
      }
    }
  }
  return best;
}

SetPoint project(const InverterCapability& cap, const SetPoint& pt) {
  if (contains(cap, pt, 0.0)) return pt;
  return minimize_quadratic(cap, Eigen::Matrix2d::Identity(), -pt.vec());
}

}  // namespace feedopf
