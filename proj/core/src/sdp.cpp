#include "feedopf/sdp.hpp"

#include <cmath>

namespace feedopf {

namespace {

/// Sum_i lambda_{P,i} Phi_i + lambda_{Q,i} Psi_i over the non-substation nodes.
ComplexMatrix multiplier_matrix(const Eigen::VectorXd& lambda, const PowerFlowMatrices& m) {
  const Eigen::Index n = m.nodes();
  if (lambda.size() != 2 * (n - 1)) {
    throw ContractViolation("multiplier vector must have one (P,Q) pair per non-substation node");
  }
  ComplexMatrix acc = ComplexMatrix::Zero(n, n);
  for (Eigen::Index i = 1; i < n; ++i) {
    acc += lambda(2 * (i - 1)) * m.phi[i].mat() + lambda(2 * (i - 1) + 1) * m.psi[i].mat();
  }
  return acc;
}

/// Polish a stalled projected-gradient iterate by solving the first-order
/// optimality system on the active face of the voltage set with V kept in
/// low-rank factored form V = X X^H, X in C^{n x r}. The active face is not
/// affine in V (bound diagonals pin the row norms of X, while the factor
/// itself may rotate), so the face optimum is found with a damped
/// Gauss-Newton iteration on
///     (grad f(X X^H) + Diag(nu)) X = 0,    |X_i|^2 = c_i  for pinned rows,
/// where nu holds one signed multiplier per pinned diagonal. Rank and pin
/// detection is refined inside the loop: wrong-sign multipliers release the
/// pin, bound violations add one, and a non-PSD dual slack grows the rank.
std::optional<HermitianMatrix> face_polish(const HermitianMatrix& v, double act_tol,
                                           const ComplexMatrix& phi0,
                                           const ComplexMatrix& lam_mat, const SdpCost& cost,
                                           const VoltageSet& vs) {
  if (!(cost.rho > 0.0)) return std::nullopt;
  const Eigen::Index n = v.dim();
  const SpectralDecomposition es = eigh(v);
  const double w_max = std::max(es.eigenvalues.maxCoeff(), 1.0);

  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (es.eigenvalues(i) > act_tol * w_max) ++r;
  }
  if (r == 0) return std::nullopt;
  ComplexMatrix x(n, r);
  for (Eigen::Index i = 0, c = 0; i < n; ++i) {
    if (es.eigenvalues(i) > act_tol * w_max) {
      x.col(c++) = es.eigenvectors.col(i) * std::sqrt(es.eigenvalues(i));
    }
  }

  struct Pin {
    Eigen::Index node;
    double value;
    int side;  // +1 upper, -1 lower, 0 equality (slack)
  };
  const ComplexMatrix x_init = x;
  std::vector<Pin> pinned;

  // Dual slack with the quadratic coupling a*Tr(Phi0 V) + b carried as an
  // explicit unknown s. Eliminating the trace this way keeps the Jacobian
  // scale around ||lam_mat||; folding it in directly multiplies the stiff
  // direction by a*||Phi0||^2 and buries the rho-flat curvature below the
  // Jacobian's noise floor.
  auto dual_slack = [&](const ComplexMatrix& xm, double s, const Eigen::VectorXd& nu,
                        const std::vector<Pin>& pins) -> ComplexMatrix {
    ComplexMatrix z = s * phi0 + lam_mat + cost.rho * (xm * xm.adjoint());
    for (std::size_t c = 0; c < pins.size(); ++c) {
      z(pins[c].node, pins[c].node) += nu(static_cast<Eigen::Index>(c));
    }
    return z;
  };

  // Two working-set starts. The gradient iterate cannot reveal bounds that
  // only become active a long way out along the near-flat directions, so if
  // the face read off the iterate has no stationary point (Gauss-Newton
  // bottoms out at a nonzero residual), retry with every free diagonal pinned
  // to its nearest bound and let the multiplier-sign test release the wrong
  // ones, as in a classical active-set method.
  for (int attempt = 0; attempt < 2; ++attempt) {
    x = x_init;
    pinned.clear();
    pinned.push_back({vs.slack_index, vs.slack_sq, 0});
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i == vs.slack_index) continue;
      const double d = v.mat()(i, i).real();
      if (std::abs(d - vs.vmax_sq) < act_tol) {
        pinned.push_back({i, vs.vmax_sq, +1});
      } else if (std::abs(d - vs.vmin_sq) < act_tol) {
        pinned.push_back({i, vs.vmin_sq, -1});
      } else if (attempt == 1) {
        const bool upper = vs.vmax_sq - d < d - vs.vmin_sq;
        pinned.push_back({i, upper ? vs.vmax_sq : vs.vmin_sq, upper ? +1 : -1});
      }
    }

    for (int round = 0; round < 4 * static_cast<int>(n); ++round) {
      const Eigen::Index rr = x.cols();
      const Eigen::Index np = static_cast<Eigen::Index>(pinned.size());
      const Eigen::Index nx = 2 * n * rr;        // real dofs of the factor
      const Eigen::Index nz = nx + np + 1;       // unknowns: X, nu, s
      const Eigen::Index nf = nx + np + 1;       // Z*X, pin gaps, trace link

      auto unpack_x = [&](const Eigen::VectorXd& z) {
        ComplexMatrix xm(n, rr);
        Eigen::Map<Eigen::VectorXd>(reinterpret_cast<double*>(xm.data()), nx) = z.head(nx);
        return xm;
      };
      auto residual_of = [&](const Eigen::VectorXd& z) {
        const ComplexMatrix xm = unpack_x(z);
        const double s = z(nz - 1);
        const ComplexMatrix zx = dual_slack(xm, s, z.segment(nx, np), pinned) * xm;
        Eigen::VectorXd f(nf);
        f.head(nx) =
            Eigen::Map<const Eigen::VectorXd>(reinterpret_cast<const double*>(zx.data()), nx);
        for (Eigen::Index c = 0; c < np; ++c) {
          const Pin& pin = pinned[static_cast<std::size_t>(c)];
          f(nx + c) = xm.row(pin.node).squaredNorm() - pin.value;
        }
        // With a = 0 the coupling coefficient s is the constant b and the last
        // row just pins the unknown there; the zero-phi0 branch below follows
        // the same convention.
        f(nf - 1) = cost.a > 0.0 ? (s - cost.b) / cost.a - trace_real(phi0, xm * xm.adjoint())
                                 : s - cost.b;
        return f;
      };
      // Retraction after a trial step: restore the pinned row norms, the trace
      // link, and the row-least-squares multipliers exactly. A raw Newton step
      // picks up second-order violations in exactly these rows, which would
      // force the line search into vanishing step sizes along the curved
      // solution manifold.
      auto close = [&](Eigen::VectorXd z) {
        ComplexMatrix xm = unpack_x(z);
        for (const Pin& pin : pinned) {
          const double rn = xm.row(pin.node).squaredNorm();
          if (rn > 1e-14 && pin.value > 0.0) xm.row(pin.node) *= std::sqrt(pin.value / rn);
        }
        const double s = cost.a * trace_real(phi0, xm * xm.adjoint()) + cost.b;
        Eigen::VectorXd nuv = Eigen::VectorXd::Zero(np);
        const ComplexMatrix gx = dual_slack(xm, s, nuv, pinned) * xm;
        for (Eigen::Index c = 0; c < np; ++c) {
          const Eigen::Index i = pinned[static_cast<std::size_t>(c)].node;
          const double rn = xm.row(i).squaredNorm();
          if (rn > 1e-14) nuv(c) = -(gx.row(i) * xm.row(i).adjoint())(0, 0).real() / rn;
        }
        z.head(nx) =
            Eigen::Map<const Eigen::VectorXd>(reinterpret_cast<const double*>(xm.data()), nx);
        z.segment(nx, np) = nuv;
        z(nz - 1) = s;
        return z;
      };

      Eigen::VectorXd z(nz);
      z.head(nx) = Eigen::Map<const Eigen::VectorXd>(reinterpret_cast<const double*>(x.data()), nx);
      z.segment(nx, np).setZero();
      z(nz - 1) = 0.0;
      z = close(z);
      Eigen::VectorXd f = residual_of(z);
      // ~1000x above the rounding floor of the residual evaluation itself
      // (1e-16 * the dual-slack scale), so large-multiplier instances still
      // resolve to a residual their absolute tolerance can accept.
      const double fstop = 1e-13 * (1.0 + lam_mat.norm() + cost.rho * w_max);
      bool solved = false;
      for (int it = 0; it < 300; ++it) {
        const double fn = f.norm();
        if (fn <= fstop) {
          solved = true;
          break;
        }
        // Analytic Jacobian, column by real coordinate: the rho-flat curvature
        // sits ~9 orders below the leading scale, well past what a divided
        // difference can resolve.
        const ComplexMatrix xm = unpack_x(z);
        const double s = z(nz - 1);
        const ComplexMatrix slack = dual_slack(xm, s, z.segment(nx, np), pinned);
        const ComplexMatrix phix = phi0 * xm;
        Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(nf, nz);
        for (Eigen::Index j = 0; j < nx; ++j) {
          ComplexMatrix e = ComplexMatrix::Zero(n, rr);
          reinterpret_cast<double*>(e.data())[j] = 1.0;
          const ComplexMatrix de =
              slack * e + cost.rho * ((e * xm.adjoint() + xm * e.adjoint()) * xm);
          jac.col(j).head(nx) =
              Eigen::Map<const Eigen::VectorXd>(reinterpret_cast<const double*>(de.data()), nx);
          for (Eigen::Index c = 0; c < np; ++c) {
            const Eigen::Index i = pinned[static_cast<std::size_t>(c)].node;
            jac(nx + c, j) = 2.0 * (xm.row(i).conjugate().cwiseProduct(e.row(i))).sum().real();
          }
          if (cost.a > 0.0) {
            jac(nf - 1, j) = -2.0 * (phix.conjugate().cwiseProduct(e)).sum().real();
          }
        }
        for (Eigen::Index c = 0; c < np; ++c) {
          const Eigen::Index i = pinned[static_cast<std::size_t>(c)].node;
          ComplexMatrix de = ComplexMatrix::Zero(n, rr);
          de.row(i) = xm.row(i);
          jac.col(nx + c).head(nx) =
              Eigen::Map<const Eigen::VectorXd>(reinterpret_cast<const double*>(de.data()), nx);
        }
        jac.col(nz - 1).head(nx) =
            Eigen::Map<const Eigen::VectorXd>(reinterpret_cast<const double*>(phix.data()), nx);
        jac(nf - 1, nz - 1) = cost.a > 0.0 ? 1.0 / cost.a : 1.0;

        // Min-norm Gauss-Newton step. The threshold keeps the rho-scaled flat
        // singular values while discarding the factor's unitary gauge nullspace.
        Eigen::BDCSVD<Eigen::MatrixXd> svd(jac, Eigen::ComputeThinU | Eigen::ComputeThinV);
        svd.setThreshold(1e-11);
        const Eigen::VectorXd dz = svd.solve(-f);
        if (!dz.allFinite()) break;
        double t = 1.0;
        bool accepted = false;
        for (int bt = 0; bt < 40; ++bt) {
          const Eigen::VectorXd zt = close(z + t * dz);
          const Eigen::VectorXd ft = residual_of(zt);
          if (ft.norm() < fn * (1.0 - 1e-4 * t)) {
            z = zt;
            f = ft;
            accepted = true;
            break;
          }
          t *= 0.5;
        }
        if (!accepted) {
          solved = f.norm() <= 1e3 * fstop;  // settle for a slightly looser fit
          break;
        }
      }
      if (!solved) break;  // no stationary point on this working set

      x = unpack_x(z);
      const Eigen::VectorXd nu = z.segment(nx, np);

      // Active-set refinement on the converged face optimum.
      bool changed = false;
      for (Eigen::Index c = 0; c < np && !changed; ++c) {
        const Pin& pin = pinned[static_cast<std::size_t>(c)];
        if ((pin.side > 0 && nu(c) < -1e-9) || (pin.side < 0 && nu(c) > 1e-9)) {
          pinned.erase(pinned.begin() + static_cast<std::ptrdiff_t>(c));
          changed = true;
        }
      }
      if (changed) continue;

      const ComplexMatrix vm = x * x.adjoint();
      for (Eigen::Index i = 0; i < n && !changed; ++i) {
        if (i == vs.slack_index) continue;
        bool already = false;
        for (const Pin& pin : pinned) already = already || pin.node == i;
        if (already) continue;
        const double d = vm(i, i).real();
        if (d > vs.vmax_sq + 1e-11) {
          pinned.push_back({i, vs.vmax_sq, +1});
          changed = true;
        } else if (d < vs.vmin_sq - 1e-11) {
          pinned.push_back({i, vs.vmin_sq, -1});
          changed = true;
        }
      }
      if (changed) continue;

      // Dual slack must be PSD; a negative direction means the rank guess was
      // too small, so seed a new factor column along it and resolve.
      const ComplexMatrix slack = dual_slack(x, z(nz - 1), nu, pinned);
      Eigen::SelfAdjointEigenSolver<ComplexMatrix> zs(slack);
      const double scale = std::max(1.0, slack.norm());
      if (zs.eigenvalues().minCoeff() < -1e-8 * scale) {
        // First-order stationary but not optimal: the factorization admits
        // saddles whose escape direction is exactly the slack's negative
        // eigenvector. A token perturbation falls straight back into the same
        // basin, so line-search the true objective along that direction
        // (with pinned row norms restored) before handing back to Gauss-Newton.
        const ComplexVector w = zs.eigenvectors().col(0);
        ComplexMatrix base;
        if (rr < n) {
          base.resize(n, rr + 1);
          base.leftCols(rr) = x;
          base.col(rr).setZero();
        } else {
          // Rotate by the right singular basis (a gauge move, V unchanged) and
          // reuse a numerically dead column for the new direction.
          Eigen::BDCSVD<ComplexMatrix> xsvd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
          if (xsvd.singularValues()(rr - 1) > 1e-7 * xsvd.singularValues()(0)) break;
          base = xsvd.matrixU() * xsvd.singularValues().asDiagonal();
          base.col(rr - 1).setZero();
        }
        auto obj_of = [&](const ComplexMatrix& xm) {
          const ComplexMatrix vv = xm * xm.adjoint();
          const double tt = trace_real(phi0, vv);
          return 0.5 * cost.a * tt * tt + cost.b * tt + trace_real(lam_mat, vv) +
                 0.5 * cost.rho * vv.squaredNorm();
        };
        double f_best = obj_of(x);
        ComplexMatrix x_best;
        for (double eta = 1e-6; eta <= 16.0; eta *= 4.0) {
          ComplexMatrix cand = base;
          cand.col(base.cols() - 1) = std::sqrt(eta) * w;
          for (const Pin& pin : pinned) {
            const double rn = cand.row(pin.node).squaredNorm();
            if (rn > 1e-14 && pin.value > 0.0) cand.row(pin.node) *= std::sqrt(pin.value / rn);
          }
          const double o = obj_of(cand);
          if (o < f_best - 1e-14 * (1.0 + std::abs(f_best))) {
            f_best = o;
            x_best = cand;
          }
        }
        if (x_best.size() == 0) break;  // no descent found; accept defeat
        x = std::move(x_best);
        continue;
      }
      return HermitianMatrix::symmetrized(vm);
    }
  }
  return std::nullopt;
}

/// Global solve through the one-dimensional dual of the trace coupling.
/// Writing the objective as g(t) + <lam_mat, V> + rho/2 ||V||^2 with
/// t = Tr(Phi0 V) and g(t) = a t^2/2 + b t, strong duality in the scalar
/// multiplier mu of the epigraph of g turns the inner minimization into a
/// plain Euclidean projection onto the voltage set:
///     V(mu) = proj(-(mu Phi0 + lam_mat)/rho),
/// and the outer problem into a concave 1-D maximization whose derivative
/// t(V(mu)) + (b - mu)/a is strictly decreasing. Bisection to an absolute
/// width of mu_tol then pins V(mu*) down to mu_tol * ||Phi0|| / rho in
/// Frobenius norm. Slower than the face polish but immune to its failure
/// mode (an active face that cannot be read off a stalled iterate).
HermitianMatrix partial_dual_solve(const ComplexMatrix& lam_mat, const ComplexMatrix& phi0,
                                   const SdpCost& cost, const VoltageSet& vs, double proj_tol,
                                   int proj_max_iter, double mu_tol) {
  const double diag_cap = std::max(vs.vmax_sq, vs.slack_sq);
  std::optional<HermitianMatrix> last_far;  // warm start across nearby mu
  auto v_of = [&](double mu) -> HermitianMatrix {
    const ComplexMatrix g = mu * phi0 + lam_mat;
    // Displacement within the set's own scale: the diagonal-dual projection
    // is exact and cheap. Degenerate directions can still make it crawl, so
    // cap its budget and fall through to the primal route instead of waiting.
    if (g.norm() <= 30.0 * std::max(1.0, diag_cap) * cost.rho) {
      try {
        return project_voltage_set(HermitianMatrix::symmetrized(-g / cost.rho), vs, proj_tol,
                                   std::min(proj_max_iter, 3000));
      } catch (const ConvergenceError&) {
      }
    }
    // Far displacement: the projection's positive part is a low-rank contact
    // face and the diagonal dual turns rank-deficient (its Jacobian collapses
    // onto that face), so no diagonal-multiplier iteration can converge.
    // Solve min <g,V> + rho/2 ||V||^2 primally instead, by the same two-stage
    // recipe as the outer problem: a short projected-gradient descent in
    // these balanced units walks onto the active face (every projection it
    // requests stays at the set's own scale, where the diagonal dual is
    // fast), and the factored active-set solve polishes the flat directions.
    const Eigen::Index n = lam_mat.rows();
    auto h_of = [&](const ComplexMatrix& v) {
      return trace_real(g, v) + 0.5 * cost.rho * v.squaredNorm();
    };
    HermitianMatrix v = last_far ? *last_far
                                 : clamp_diagonal(project_psd(HermitianMatrix::symmetrized(
                                                      (-static_cast<double>(n) * diag_cap /
                                                       g.norm()) *
                                                      g)),
                                                  vs);
    double h = h_of(v.mat());
    double step = static_cast<double>(n) * diag_cap / g.norm();
    for (int it = 0; it < 200; ++it) {
      const ComplexMatrix grad = g + cost.rho * v.mat();
      step *= 2.0;
      HermitianMatrix v_next = v;
      double h_next = h;
      double move = 0.0;
      for (int bt = 0; bt < 60; ++bt) {
        v_next = project_voltage_set(HermitianMatrix::symmetrized(v.mat() - step * grad), vs,
                                     proj_tol, proj_max_iter);
        const ComplexMatrix d = v_next.mat() - v.mat();
        move = d.norm();
        h_next = h_of(v_next.mat());
        if (h_next <= h + trace_real(grad, d) + 0.5 / step * move * move +
                          1e-14 * (1.0 + std::abs(h))) {
          break;
        }
        step *= 0.5;
      }
      if (h_next > h) break;  // no descent left at this precision
      v = v_next;
      h = h_next;
      if (move < 1e-9 * static_cast<double>(n)) break;
    }
    const SdpCost inner{0.0, 0.0, cost.rho};
    for (double act_tol : {1e-3, 1e-2, 1e-1}) {
      if (auto sol = face_polish(v, act_tol, phi0, g, inner, vs)) {
        last_far = *sol;
        return *sol;
      }
    }
    throw ConvergenceError("partial_dual_solve: inner minimization failed", g.norm());
  };
  auto slope = [&](double mu) {
    return trace_real(phi0, v_of(mu).mat()) + (cost.b - mu) / cost.a;
  };

  // The coupling trace is bounded on the voltage set (|V_ij| is capped by the
  // largest admissible diagonal), which brackets the dual optimum b + a*t(V*)
  // outright; no expansion probing needed.
  const double t_bound = diag_cap * phi0.cwiseAbs().sum();
  double lo = cost.b - cost.a * t_bound;
  double hi = cost.b + cost.a * t_bound;
  double s_lo = t_bound + (cost.b - lo) / cost.a;   // >= slope(lo) >= 0
  double s_hi = -t_bound + (cost.b - hi) / cost.a;  // <= slope(hi) <= 0

  // Illinois-damped false position: the derivative is strictly decreasing
  // (at least 1/a in magnitude), so the secant model closes the bracket far
  // faster than bisection while the side-halving keeps it from stagnating.
  int side = 0;
  for (int i = 0; i < 400 && hi - lo > mu_tol; ++i) {
    double mid = (lo * s_hi - hi * s_lo) / (s_hi - s_lo);
    const double margin = 0.01 * (hi - lo);
    if (!std::isfinite(mid) || mid < lo + margin || mid > hi - margin) {
      mid = 0.5 * (lo + hi);
    }
    const double sm = slope(mid);
    if (sm > 0.0) {
      lo = mid;
      s_lo = sm;
      if (side == +1) s_hi *= 0.5;
      side = +1;
    } else {
      hi = mid;
      s_hi = sm;
      if (side == -1) s_lo *= 0.5;
      side = -1;
    }
  }
  return v_of(0.5 * (lo + hi));
}

}  // namespace

double v_objective(const HermitianMatrix& v, const Eigen::VectorXd& lambda,
                   const PowerFlowMatrices& m, const SdpCost& cost) {
  const double t = trace_real(m.phi[0].mat(), v.mat());
  double obj = 0.5 * cost.a * t * t + cost.b * t;
  obj += trace_real(multiplier_matrix(lambda, m), v.mat());
  obj += 0.5 * cost.rho * v.mat().squaredNorm();
  return obj;
}

SubproblemResult solve_v_subproblem(const Eigen::VectorXd& lambda, const PowerFlowMatrices& m,
                                    const SdpCost& cost, const VoltageSet& vs,
                                    const SubproblemOptions& opt,
                                    const HermitianMatrix* warm_start) {
  cost.validate();
  vs.validate();
  const Eigen::Index n = m.nodes();
  const ComplexMatrix lam_mat = multiplier_matrix(lambda, m);
  const ComplexMatrix& phi0 = m.phi[0].mat();

  auto objective = [&](const ComplexMatrix& v) {
    const double t = trace_real(phi0, v);
    return 0.5 * cost.a * t * t + cost.b * t + trace_real(lam_mat, v) +
           0.5 * cost.rho * v.squaredNorm();
  };
  auto gradient = [&](const ComplexMatrix& v) -> ComplexMatrix {
    const double t = trace_real(phi0, v);
    return (cost.a * t + cost.b) * phi0 + lam_mat + cost.rho * v;
  };
  auto proj = [&](const ComplexMatrix& v) {
    return project_voltage_set(HermitianMatrix::symmetrized(v), vs, opt.projection_tol,
                               opt.projection_max_iter);
  };

  HermitianMatrix v = warm_start != nullptr
                          ? *warm_start
                          : proj(ComplexMatrix::Identity(n, n));
  double f = objective(v.mat());
  const double lipschitz = cost.a * phi0.squaredNorm() + cost.rho;
  double step = lipschitz > 0.0 ? 1.0 / lipschitz : 1.0;
  double residual = std::numeric_limits<double>::infinity();
  int stalled = 0;
  bool rescue_spent = false;  // the 1-D dual solve is deterministic; run it once

  for (int it = 1; it <= opt.max_iter; ++it) {
    const ComplexMatrix g = gradient(v.mat());
    if (!g.allFinite()) throw NumericalError("solve_v_subproblem: NaN/Inf in gradient");

    // Backtracked projected-gradient step with the standard quadratic
    // upper-bound acceptance test; monotone by construction.
    step *= 2.0;
    HermitianMatrix v_next = v;
    double f_next = f;
    double move = 0.0;
    for (int bt = 0; bt < 60; ++bt) {
      v_next = proj(v.mat() - step * g);
      const ComplexMatrix d = v_next.mat() - v.mat();
      move = d.norm();
      f_next = objective(v_next.mat());
      const double model = f + trace_real(g, d) + 0.5 / step * move * move;
      if (f_next <= model + 1e-14 * (1.0 + std::abs(f))) break;
      step *= 0.5;
    }
    if (f_next > f) {  // could not decrease; treat as converged to tolerance check
      v_next = v;
      f_next = f;
      move = 0.0;
    }
    v = v_next;
    f = f_next;

    // Cheap bound on the unit-step residual from the accepted step; run the
    // exact check when the bound clears the tolerance, and also periodically,
    // because on the near-flat directions of the regularized objective the
    // gradient iteration can crawl for thousands of steps while the face
    // solvers below would finish immediately.
    const double bound = step <= 1.0 ? move / step : move;
    if (bound < opt.tol || move == 0.0 || it % 500 == 0) {
      const HermitianMatrix fixed = proj(v.mat() - gradient(v.mat()));
      residual = (v.mat() - fixed.mat()).norm();
      if (residual < opt.tol) {
        return {std::move(v), f, residual, it};
      }
      // Projected gradient has located the active face but cannot resolve the
      // near-flat directions within it; finish with the exact face QP. The
      // face is read off the projected point (already inside the set) at a
      // tolerance scaled to how far the iterate still is from stationarity.
      const double act_tol = std::min(1e-2, std::max(1e-5, 50.0 * residual));
      const std::optional<HermitianMatrix> polished =
          face_polish(fixed, act_tol, phi0, lam_mat, cost, vs);
      if (polished) {
        const double f_p = objective(polished->mat());
        const HermitianMatrix fixed_p = proj(polished->mat() - gradient(polished->mat()));
        const double res_p = (polished->mat() - fixed_p.mat()).norm();
        // The unit-step fixed-point residual certifies (near-)optimality on
        // its own for this convex problem; an objective comparison against
        // the gradient iterate would be biased by that iterate's own
        // projection-tolerance infeasibility.
        if (res_p < opt.tol) {
          return {*polished, f_p, res_p, it};
        }
        if (f_p < f) {  // adopt any strict improvement and keep iterating
          v = *polished;
          f = f_p;
          stalled = 0;
          continue;
        }
      }
      // Face polish could not identify the optimum from here; fall back to
      // the 1-D dual solve, which needs no face information at all, and give
      // its result one polishing pass for the last digits.
      if (cost.a > 0.0 && cost.rho > 0.0 && !rescue_spent) try {
        rescue_spent = true;
        const double mu_tol =
            std::max(1e-30, 0.1 * opt.tol * cost.rho / std::max(1.0, phi0.norm()));
        const HermitianMatrix vb = partial_dual_solve(lam_mat, phi0, cost, vs,
                                                      opt.projection_tol,
                                                      opt.projection_max_iter, mu_tol);
        const double f_b = objective(vb.mat());
        const HermitianMatrix fix_b = proj(vb.mat() - gradient(vb.mat()));
        const double res_b = (vb.mat() - fix_b.mat()).norm();
        if (res_b < opt.tol) {
          return {vb, f_b, res_b, it};
        }
        const std::optional<HermitianMatrix> repolished = face_polish(
            vb, std::min(1e-2, std::max(1e-6, 50.0 * res_b)), phi0, lam_mat, cost, vs);
        if (repolished) {
          const double f_r = objective(repolished->mat());
          const HermitianMatrix fix_r = proj(repolished->mat() - gradient(repolished->mat()));
          const double res_r = (repolished->mat() - fix_r.mat()).norm();
          if (res_r < opt.tol) {
            return {*repolished, f_r, res_r, it};
          }
        }
        if (f_b < f) {  // keep the dual point as the new iterate regardless
          v = vb;
          f = f_b;
          stalled = 0;
          continue;
        }
      } catch (const ConvergenceError&) {
        // The dual solve is a best-effort rescue; on failure fall through to
        // the stall accounting and report the gradient iterate's residual.
      }
      if (move == 0.0 && ++stalled >= 5) {
        throw ConvergenceError("solve_v_subproblem: stalled short of tolerance", residual);
      }
    }
    if (move > 0.0) stalled = 0;
  }
  throw ConvergenceError("solve_v_subproblem: iteration cap exceeded", residual);
}

DualValueResult dual_value(const Eigen::VectorXd& lambda, const PowerFlowMatrices& m,
                           const SdpCost& cost, const VoltageSet& vs,
                           const std::vector<InverterCapability>& caps,
                           const std::vector<QuadraticAgentCost>& agent_costs,
                           const std::vector<SetPoint>& loads, const SubproblemOptions& opt,
                           const HermitianMatrix* warm_start) {
  const std::size_t n_inv = caps.size();
  if (agent_costs.size() != n_inv || loads.size() != n_inv ||
      lambda.size() != static_cast<Eigen::Index>(2 * n_inv)) {
    throw ContractViolation("dual_value: inconsistent per-inverter dimensions");
  }
  SubproblemResult sub = solve_v_subproblem(lambda, m, cost, vs, opt, warm_start);
  double q = sub.objective;
  std::vector<SetPoint> u(n_inv);
  for (std::size_t i = 0; i < n_inv; ++i) {
    const Eigen::Vector2d li = lambda.segment<2>(2 * static_cast<Eigen::Index>(i));
    // min over Y_i of (1/2)u'Au + b'u + li'(Cu + Dd) with C = -I, D = I.
    const Eigen::Vector2d c = agent_costs[i].b - li;
    u[i] = minimize_quadratic(caps[i], agent_costs[i].A, c);
    const Eigen::Vector2d uv = u[i].vec();
    q += 0.5 * uv.dot(agent_costs[i].A * uv) + c.dot(uv) + li.dot(loads[i].vec());
  }
  return {q, std::move(sub.V), std::move(u)};
}

}  // namespace feedopf
