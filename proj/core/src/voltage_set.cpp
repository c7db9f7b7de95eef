#include "feedopf/voltage_set.hpp"

#include <Eigen/Eigenvalues>

#include <optional>

namespace feedopf {

HermitianMatrix clamp_diagonal(const HermitianMatrix& m, const VoltageSet& vs) {
  ComplexMatrix out = m.mat();
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    double d = out(i, i).real();
    if (i == vs.slack_index) {
      d = vs.slack_sq;
    } else {
      d = std::min(std::max(d, vs.vmin_sq), vs.vmax_sq);
    }
    out(i, i) = d;
  }
  return HermitianMatrix::symmetrized(out);
}

MembershipResidual voltage_set_residual(const HermitianMatrix& m, const VoltageSet& vs) {
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(m.mat(), Eigen::EigenvaluesOnly);
  const double psd = std::max(0.0, -solver.eigenvalues().minCoeff());
  double box = 0.0;
  for (Eigen::Index i = 0; i < m.dim(); ++i) {
    const double d = m.mat()(i, i).real();
    if (i == vs.slack_index) {
      box = std::max(box, std::abs(d - vs.slack_sq));
    } else {
      box = std::max({box, vs.vmin_sq - d, d - vs.vmax_sq});
    }
  }
  return {psd, box};
}

HermitianMatrix project_voltage_set(const HermitianMatrix& m, const VoltageSet& vs,
                                    double tol, int max_iter) {
  vs.validate();
  const Eigen::Index n = m.dim();

  // Dual formulation: with one multiplier nu_i per diagonal constraint, the
  // primal minimizer is X(nu) = proj_PSD(M - Diag(nu)) and optimality reduces
  // to the semismooth root problem F_i(nu) = X_ii - clamp(X_ii + nu_i) = 0,
  // which encodes both diagonal feasibility and complementarity. Newton on F
  // (finite-difference Jacobian) with a damped fixed-point fallback converges
  // for arbitrarily displaced inputs, where plain alternating projections
  // stall.
  const auto lo = [&](Eigen::Index i) {
    return i == vs.slack_index ? vs.slack_sq : vs.vmin_sq;
  };
  const auto hi = [&](Eigen::Index i) {
    return i == vs.slack_index ? vs.slack_sq : vs.vmax_sq;
  };
  const auto x_of = [&](const Eigen::VectorXd& nu) {
    ComplexMatrix shifted = m.mat();
    shifted.diagonal() -= nu.cast<std::complex<double>>();
    return project_psd(HermitianMatrix::symmetrized(shifted));
  };
  const auto f_of = [&](const HermitianMatrix& x, const Eigen::VectorXd& nu) {
    Eigen::VectorXd f(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d = x.mat()(i, i).real();
      f(i) = d - std::min(std::max(d + nu(i), lo(i)), hi(i));
    }
    return f;
  };

  // The achievable absolute accuracy degrades with the input scale (the PSD
  // eigendecomposition is only relatively accurate), so a fixed tolerance is
  // unattainable for far-displaced inputs; widen it to the noise floor.
  const double tol_eff = std::max(tol, 1e-13 * m.mat().norm());

  const auto solve_from = [&](Eigen::VectorXd nu) -> std::optional<HermitianMatrix> {
    HermitianMatrix x = x_of(nu);
    Eigen::VectorXd f = f_of(x, nu);
    double best = f.lpNorm<Eigen::Infinity>();

    // Newton either converges in a few dozen sweeps or has lost rank on a
    // degenerate contact face and will not recover; in the latter case the
    // budget is better spent on the alternating-projection fallback below.
    const int newton_budget = std::min(max_iter, 2000);
    for (int it = 0; it < newton_budget; ++it) {
      if (best <= tol_eff) return x;

      Eigen::MatrixXd jac(n, n);
      const double h = 1e-7 * std::max(1.0, nu.lpNorm<Eigen::Infinity>());
      for (Eigen::Index j = 0; j < n; ++j) {
        Eigen::VectorXd nu_j = nu;
        nu_j(j) += h;
        jac.col(j) = (f_of(x_of(nu_j), nu_j) - f) / h;
      }
      jac.diagonal().array() += 1e-12;
      Eigen::VectorXd dnu = jac.fullPivLu().solve(-f);
      if (!dnu.allFinite()) dnu = f;  // fixed-point direction as fallback

      bool accepted = false;
      double t = 1.0;
      for (int bt = 0; bt < 40; ++bt) {
        const Eigen::VectorXd nu_t = nu + t * dnu;
        const HermitianMatrix x_t = x_of(nu_t);
        const Eigen::VectorXd f_t = f_of(x_t, nu_t);
        const double norm_t = f_t.lpNorm<Eigen::Infinity>();
        if (norm_t < best * (1.0 - 1e-4 * t) || norm_t <= tol_eff) {
          nu = nu_t;
          x = x_t;
          f = f_t;
          best = norm_t;
          accepted = true;
          break;
        }
        t *= 0.5;
      }
      if (!accepted) {
        // Damped dual fixed point: globally convergent (the dual gradient is
        // 1-Lipschitz), so it always makes headway when Newton does not.
        nu += f;
        x = x_of(nu);
        f = f_of(x, nu);
        best = f.lpNorm<Eigen::Infinity>();
      }
    }
    return std::nullopt;
  };

  // Two starts: the zero multiplier, and the multipliers that put the raw
  // diagonal on its bounds. The latter is nearly exact for inputs displaced
  // far outside the set, where the zero start has to cover the whole distance
  // in damped steps; the zero start is the more reliable of the two for
  // moderate inputs.
  Eigen::VectorXd nu_diag(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = m.mat()(i, i).real();
    nu_diag(i) = d - std::min(std::max(d, lo(i)), hi(i));
  }
  const bool far = nu_diag.lpNorm<Eigen::Infinity>() > 100.0 * std::max(1.0, vs.vmax_sq);
  const Eigen::VectorXd first = far ? nu_diag : Eigen::VectorXd::Zero(n);
  const Eigen::VectorXd second = far ? Eigen::VectorXd::Zero(n) : nu_diag;
  if (auto x = solve_from(first)) return *x;
  if (auto x = solve_from(second)) return *x;

  // Last resort: Dykstra's alternating projections between the PSD cone and
  // the diagonal box. It converges to the exact projection for every input,
  // just at a linear rate; with these small matrices one sweep is a single
  // cheap eigendecomposition, so a generous budget still costs little. This
  // covers the degenerate contact faces where the dual Newton above loses
  // rank and stalls.
  {
    ComplexMatrix x = m.mat();
    ComplexMatrix p = ComplexMatrix::Zero(n, n);
    ComplexMatrix q = ComplexMatrix::Zero(n, n);
    for (int it = 0; it < 500000; ++it) {
      const ComplexMatrix y = project_psd(HermitianMatrix::symmetrized(x + p)).mat();
      p = x + p - y;
      const ComplexMatrix x_next = clamp_diagonal(HermitianMatrix::symmetrized(y + q), vs).mat();
      q = y + q - x_next;
      const double gap = (x_next - y).norm();
      x = x_next;
      if (gap <= tol_eff) {
        // y is PSD and x is box-feasible; they agree to within the gap, so
        // re-pinning the diagonal of the PSD factor keeps both residuals at
        // the tolerance.
        return clamp_diagonal(HermitianMatrix::symmetrized(y), vs);
      }
    }
  }
  throw ConvergenceError("project_voltage_set: dual iteration did not converge",
                         f_of(x_of(first), first).lpNorm<Eigen::Infinity>());
}

}  // namespace feedopf
