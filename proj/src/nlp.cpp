#include "oam/nlp.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <limits>

namespace oam {

namespace {

VecX clip_to_bounds(const NlpProblem& p, VecX z) {
  if (p.lower_bounds.size() == p.n) z = z.cwiseMax(p.lower_bounds);
  if (p.upper_bounds.size() == p.n) z = z.cwiseMin(p.upper_bounds);
  return z;
}

struct Multipliers {
  VecX lambda_eq;
  VecX lambda_in;
  double mu_eq = 0.0;
  double mu_in = 0.0;
  double barrier = 0.0;
};

// Augmented Lagrangian value, gradient and Gauss-Newton curvature.
// Equalities carry multipliers and a quadratic penalty; inequalities use the
// Rockafellar hinge form, which reduces to a squared-hinge exterior penalty
// while the multipliers are zero. The Hessian collects the exact penalty
// curvature mu J^T J plus the caller-provided diagonal objective curvature.
double eval_merit(const NlpProblem& p, const NlpOptions& opts,
                  const Multipliers& m, const VecX& z, VecX* grad,
                  MatX* hess = nullptr) {
  VecX gobj;
  double val = p.objective(z, grad ? &gobj : nullptr);
  if (grad) *grad = gobj;
  if (hess) {
    hess->setZero(p.n, p.n);
    if (p.objective_hessian_diag.size() == p.n) {
      hess->diagonal() = p.objective_hessian_diag;
    }
  }
  if (p.n_residuals > 0) {
    VecX r(p.n_residuals);
    MatX Jr;
    p.residuals(z, &r, grad ? &Jr : nullptr);
    val += r.squaredNorm();
    if (grad) *grad += 2.0 * Jr.transpose() * r;
    if (hess) *hess += 2.0 * Jr.transpose() * Jr;
  }
  if (hess && p.objective_hessian) p.objective_hessian(z, hess);

  if (p.n_eq > 0) {
    VecX c(p.n_eq);
    MatX Jc;
    p.eq_constraints(z, &c, grad ? &Jc : nullptr);
    val += m.lambda_eq.dot(c) + 0.5 * m.mu_eq * c.squaredNorm();
    if (grad) *grad += Jc.transpose() * (m.lambda_eq + m.mu_eq * c);
    if (hess) *hess += m.mu_eq * Jc.transpose() * Jc;
  }
  if (p.n_ineq > 0) {
    VecX g(p.n_ineq);
    MatX Jg;
    p.ineq_constraints(z, &g, grad ? &Jg : nullptr);
    if (opts.use_log_barrier) {
      for (int i = 0; i < p.n_ineq; ++i) {
        if (g(i) <= 0.0) return std::numeric_limits<double>::infinity();
        val -= m.barrier * std::log(g(i));
      }
      if (grad) {
        for (int i = 0; i < p.n_ineq; ++i) {
          *grad -= (m.barrier / g(i)) * Jg.row(i).transpose();
          if (hess) {
            *hess += (m.barrier / (g(i) * g(i))) * Jg.row(i).transpose() *
                     Jg.row(i);
          }
        }
      }
    } else {
      for (int i = 0; i < p.n_ineq; ++i) {
        const double w = std::max(0.0, m.lambda_in(i) - m.mu_in * g(i));
        val += (w * w - m.lambda_in(i) * m.lambda_in(i)) / (2.0 * m.mu_in);
        if (grad && w > 0.0) {
          *grad -= w * Jg.row(i).transpose();
          if (hess) *hess += m.mu_in * Jg.row(i).transpose() * Jg.row(i);
        }
      }
    }
  }
  return val;
}

struct InnerResult {
  VecX z;
  int iterations = 0;
  bool converged = false;
  bool finite = true;
  double kkt_residual = 0.0;
};

// Damped Gauss-Newton on the merit: Levenberg-style damping regularizes the
// model, then a projected backtracking line search along the fixed direction
// enforces a monotone merit decrease per accepted step.
InnerResult minimize_inner(const NlpProblem& p, const NlpOptions& opts,
                           const Multipliers& m, VecX z0, double tol,
                           double achieved_kkt = 0.0) {
  InnerResult out;
  VecX z = clip_to_bounds(p, std::move(z0));

  VecX grad;
  MatX H;
  double val = eval_merit(p, opts, m, z, &grad, &H);
  if (!std::isfinite(val) || !grad.allFinite()) {
    out.z = z;
    out.finite = false;
    return out;
  }

  double sigma = 1e-3;
  const bool trace_inner = std::getenv("OAM_NLP_TRACE_INNER") != nullptr;
  std::deque<double> val_history;
  for (int it = 0; it < opts.max_inner; ++it) {
    ++out.iterations;
    const VecX pg = z - clip_to_bounds(p, z - grad);
    // Penalty curvature inflates the gradient scale; the step accuracy
    // pg / curvature is what the tolerance is really about.
    const double curv = H.diagonal().cwiseAbs().maxCoeff();
    const double eff_tol = tol * (1.0 + 1.5e-8 * curv);
    if (trace_inner && it % 20 == 0) {
      int arg = 0;
      pg.cwiseAbs().maxCoeff(&arg);
      std::fprintf(stderr,
                   "  [inner] it=%d val=%.10e pg=%.3e (coord %d, g=%.3e, z=%.3e) "
                   "curv=%.2e sigma=%.2e\n",
                   it, val, pg.lpNorm<Eigen::Infinity>(), arg, grad(arg), z(arg),
                   curv, sigma);
    }
    out.kkt_residual = pg.lpNorm<Eigen::Infinity>();
    // A warm start that already sits at the stationarity level the solver
    // previously achieved on this problem has nothing left to gain.
    if (out.kkt_residual <= eff_tol ||
        (achieved_kkt > 0.0 && out.kkt_residual <= 1.02 * achieved_kkt)) {
      out.converged = true;
      break;
    }
    // Progress-based exit: when five iterations gain almost nothing, hand
    // control back to the outer loop so multipliers and penalties move.
    val_history.push_back(val);
    if (val_history.size() > 5) {
      val_history.pop_front();
      if (val_history.front() - val <=
          opts.progress_rtol * (1.0 + std::abs(val))) {
        out.converged = true;
        break;
      }
    }

    // Binding set of the box bounds: coordinates sitting on a bound with
    // the gradient pushing outward stay fixed; the Newton system is solved
    // on the free variables only (projected Newton).
    std::vector<int> free_idx;
    free_idx.reserve(p.n);
    for (int i = 0; i < p.n; ++i) {
      const bool at_lo = p.lower_bounds.size() == p.n &&
                         z(i) <= p.lower_bounds(i) + 1e-12 && grad(i) > 0.0;
      const bool at_hi = p.upper_bounds.size() == p.n &&
                         z(i) >= p.upper_bounds(i) - 1e-12 && grad(i) < 0.0;
      if (!at_lo && !at_hi) free_idx.push_back(i);
    }
    const int nf = static_cast<int>(free_idx.size());
    if (nf == 0) {
      out.converged = true;  // every coordinate pinned by its bound
      break;
    }
    MatX Hf(nf, nf);
    VecX gf(nf);
    for (int a = 0; a < nf; ++a) {
      gf(a) = grad(free_idx[a]);
      for (int b = 0; b < nf; ++b) Hf(a, b) = H(free_idx[a], free_idx[b]);
    }

    // Gain-ratio controlled Levenberg iteration: the damping tracks the
    // scale at which the Gauss-Newton model is trustworthy.
    bool accepted = false;
    VecX z_new;
    for (int attempt = 0; attempt < 25 && !accepted; ++attempt) {
      MatX A = Hf;
      A.diagonal().array() += sigma;
      const VecX df = A.ldlt().solve(-gf);
      if (!df.allFinite()) {
        sigma = std::max(sigma * 10.0, 1e-6 * (1.0 + curv));
        continue;
      }
      VecX d = VecX::Zero(p.n);
      for (int a = 0; a < nf; ++a) d(free_idx[a]) = df(a);
      z_new = clip_to_bounds(p, z + d);
      const VecX step = z_new - z;
      if (step.lpNorm<Eigen::Infinity>() < 1e-16) break;
      const double model_dec = -(grad.dot(step) + 0.5 * step.dot(H * step));
      const double val_new = eval_merit(p, opts, m, z_new, nullptr);
      const double ared = val - val_new;
      const double slack = 1e-15 * (1.0 + std::abs(val));
      if (std::isfinite(val_new) && ared > -slack &&
          (ared >= 1e-4 * std::max(model_dec, 0.0) || ared > slack)) {
        accepted = true;
        const double rho = model_dec > 0 ? ared / model_dec : 0.0;
        if (rho > 0.75) {
          sigma = std::max(1e-8, sigma / 3.0);
        } else if (rho < 0.25) {
          sigma *= 2.0;
        }
        break;
      }
      sigma *= 4.0;
    }
    if (!accepted) {
      // No damping level can decrease the merit any further in floating
      // point, which is stationarity at this scale.
      out.converged = true;
      break;
    }
    z = std::move(z_new);
    val = eval_merit(p, opts, m, z, &grad, &H);
    if (!std::isfinite(val) || !grad.allFinite()) {
      out.finite = false;
      break;
    }
  }
  out.z = z;
  return out;
}

void evaluate_violations(const NlpProblem& p, const VecX& z, VecX* c, VecX* g,
                         double* viol_eq, double* min_g) {
  *viol_eq = 0.0;
  *min_g = std::numeric_limits<double>::infinity();
  if (p.n_eq > 0) {
    c->resize(p.n_eq);
    p.eq_constraints(z, c, nullptr);
    *viol_eq = c->lpNorm<Eigen::Infinity>();
  }
  if (p.n_ineq > 0) {
    g->resize(p.n_ineq);
    p.ineq_constraints(z, g, nullptr);
    *min_g = g->minCoeff();
  }
}

}  // namespace

std::string to_string(NlpStatus s) {
  switch (s) {
    case NlpStatus::Converged: return "Converged";
    case NlpStatus::MaxIter: return "MaxIter";
    case NlpStatus::Infeasible: return "Infeasible";
    case NlpStatus::NumericalFailure: return "NumericalFailure";
  }
  return "?";
}

double nlp_check_derivatives(const NlpProblem& p, const VecX& z, double h) {
  double worst = 0.0;
  auto rel = [](double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
  };

  VecX grad(p.n);
  p.objective(z, &grad);
  for (int j = 0; j < p.n; ++j) {
    VecX zp = z, zm = z;
    zp(j) += h;
    zm(j) -= h;
    const double fd = (p.objective(zp, nullptr) - p.objective(zm, nullptr)) / (2 * h);
    worst = std::max(worst, rel(grad(j), fd));
  }

  auto check_jac = [&](const std::function<void(const VecX&, VecX*, MatX*)>& fn,
                       int rows) {
    if (!fn || rows == 0) return;
    VecX v(rows);
    MatX J(rows, p.n);
    fn(z, &v, &J);
    for (int j = 0; j < p.n; ++j) {
      VecX zp = z, zm = z;
      zp(j) += h;
      zm(j) -= h;
      VecX vp(rows), vm(rows);
      fn(zp, &vp, nullptr);
      fn(zm, &vm, nullptr);
      for (int i = 0; i < rows; ++i) {
        const double fd = (vp(i) - vm(i)) / (2 * h);
        worst = std::max(worst, rel(J(i, j), fd));
      }
    }
  };
  check_jac(p.eq_constraints, p.n_eq);
  check_jac(p.ineq_constraints, p.n_ineq);
  check_jac(p.residuals, p.n_residuals);
  return worst;
}

namespace {

double total_objective(const NlpProblem& p, const VecX& z, VecX* grad) {
  double val = p.objective(z, grad);
  if (p.n_residuals > 0) {
    VecX r(p.n_residuals);
    MatX Jr;
    p.residuals(z, &r, grad ? &Jr : nullptr);
    val += r.squaredNorm();
    if (grad) *grad += 2.0 * Jr.transpose() * r;
  }
  return val;
}

}  // namespace

NlpSolution nlp_solve(const NlpProblem& p, const NlpOptions& opts,
                      const NlpWarmStart* warm) {
  const auto t0 = std::chrono::steady_clock::now();
  NlpSolution sol;

  if (!p.initial_guess.allFinite()) {
    sol.status = NlpStatus::NumericalFailure;
    return sol;
  }

  Multipliers m;
  VecX z;
  if (warm && warm->valid && warm->z.size() == p.n) {
    z = warm->z;
    m.lambda_eq = warm->lambda_eq.size() == p.n_eq ? warm->lambda_eq
                                                   : VecX::Zero(p.n_eq);
    m.lambda_in = warm->lambda_ineq.size() == p.n_ineq ? warm->lambda_ineq
                                                       : VecX::Zero(p.n_ineq);
    m.mu_eq = warm->penalty_eq > 0 ? warm->penalty_eq : opts.penalty_eq_init;
    m.mu_in = warm->penalty_ineq > 0 ? warm->penalty_ineq : opts.penalty_ineq_init;
  } else {
    z = p.initial_guess;
    m.lambda_eq = VecX::Zero(p.n_eq);
    m.lambda_in = VecX::Zero(p.n_ineq);
    m.mu_eq = opts.penalty_eq_init;
    m.mu_in = opts.penalty_ineq_init;
  }
  m.barrier = opts.use_log_barrier ? 1.0 : 0.0;
  z = clip_to_bounds(p, z);

  if (!(warm && warm->valid) && p.n_eq > 0) {
    // First-order multiplier estimate, lambda = argmin ||grad f + J^T l||,
    // so the first inner solve does not trade feasibility for objective.
    VecX gf(p.n);
    total_objective(p, z, &gf);
    VecX c0(p.n_eq);
    MatX J0(p.n_eq, p.n);
    p.eq_constraints(z, &c0, &J0);
    const MatX JJt =
        J0 * J0.transpose() + 1e-10 * MatX::Identity(p.n_eq, p.n_eq);
    m.lambda_eq = JJt.ldlt().solve(-J0 * gf);
  }

  if (opts.check_derivatives) {
    const double worst = nlp_check_derivatives(p, z, opts.fd_step);
    if (worst > 1e-4) {
      throw std::runtime_error("nlp: derivative check failed, worst rel err " +
                               std::to_string(worst));
    }
  }

  double prev_viol_eq = std::numeric_limits<double>::infinity();
  double prev_viol_in = std::numeric_limits<double>::infinity();
  // A warm start is expected to sit near a KKT point; go straight to the
  // final tolerance instead of the loose-to-tight schedule.
  double inner_tol = (warm && warm->valid) ? opts.tol_grad
                                           : std::max(opts.tol_grad, 1e-3);

  const bool trace = std::getenv("OAM_NLP_TRACE") != nullptr;
  double achieved_kkt =
      (warm && warm->valid) ? warm->kkt_residual : 0.0;
  double last_kkt = 0.0;
  for (int outer = 0; outer < opts.max_outer; ++outer) {
    ++sol.outer_iterations;
    const InnerResult inner =
        minimize_inner(p, opts, m, z, inner_tol, achieved_kkt);
    sol.inner_iterations += inner.iterations;
    last_kkt = inner.kkt_residual;
    achieved_kkt = 0.0;  // memoization only applies before anything moves
    if (!inner.finite) {
      sol.status = NlpStatus::NumericalFailure;
      sol.z = inner.z;
      break;
    }
    z = inner.z;

    VecX c, g;
    double viol_eq, min_g;
    evaluate_violations(p, z, &c, &g, &viol_eq, &min_g);
    const double viol_in = p.n_ineq > 0 ? std::max(0.0, -min_g) : 0.0;
    if (trace) {
      std::fprintf(stderr,
                   "[nlp] outer=%d inner=%d conv=%d viol_eq=%.3e min_g=%.3e "
                   "mu_eq=%.2e mu_in=%.2e tol=%.1e\n",
                   outer, inner.iterations, inner.converged, viol_eq, min_g,
                   m.mu_eq, m.mu_in, inner_tol);
    }

    const bool feasible = viol_eq <= opts.tol_eq && viol_in <= opts.tol_ineq;
    // A live log barrier still biases the iterate; keep shrinking it.
    const bool barrier_done = !opts.use_log_barrier || m.barrier <= opts.tol_ineq;
    if (feasible && barrier_done && inner.converged && inner_tol <= opts.tol_grad) {
      sol.status = NlpStatus::Converged;
      break;
    }
    if (feasible) inner_tol = opts.tol_grad;

    // First-order multiplier updates.
    if (p.n_eq > 0) m.lambda_eq += m.mu_eq * c;
    if (p.n_ineq > 0 && !opts.use_log_barrier) {
      for (int i = 0; i < p.n_ineq; ++i) {
        m.lambda_in(i) = std::max(0.0, m.lambda_in(i) - m.mu_in * g(i));
      }
    }
    if (opts.use_log_barrier) m.barrier = std::max(1e-12, m.barrier * 0.1);

    // Grow penalties only where the multiplier updates alone stagnate.
    if (p.n_eq > 0 && viol_eq > opts.tol_eq && viol_eq > 0.5 * prev_viol_eq) {
      m.mu_eq = std::min(m.mu_eq * opts.penalty_growth, 10.0 * opts.penalty_cap);
    }
    if (p.n_ineq > 0 && viol_in > opts.tol_ineq && viol_in > 0.5 * prev_viol_in) {
      m.mu_in = std::min(m.mu_in * opts.penalty_growth, 10.0 * opts.penalty_cap);
    }
    prev_viol_eq = viol_eq;
    prev_viol_in = viol_in;
    inner_tol = std::max(opts.tol_grad, inner_tol * 0.1);

    if ((m.mu_eq > opts.penalty_cap && viol_eq > opts.tol_eq) ||
        (m.mu_in > opts.penalty_cap && viol_in > opts.tol_ineq)) {
      sol.status = NlpStatus::Infeasible;
      break;
    }
  }

  if (!sol.z.size()) sol.z = z;
  sol.objective_value = total_objective(p, sol.z, nullptr);
  VecX c, g;
  double viol_eq, min_g;
  evaluate_violations(p, sol.z, &c, &g, &viol_eq, &min_g);
  sol.max_eq_violation = viol_eq;
  sol.min_ineq_value = min_g;
  if (sol.status == NlpStatus::Converged) {
    // Invariant of the Converged status.
    if (viol_eq > opts.tol_eq ||
        (p.n_ineq > 0 && min_g < -opts.tol_ineq)) {
      sol.status = NlpStatus::MaxIter;
    }
  }

  sol.warm.z = sol.z;
  sol.warm.lambda_eq = m.lambda_eq;
  sol.warm.lambda_ineq = m.lambda_in;
  sol.warm.penalty_eq = m.mu_eq;
  sol.warm.penalty_ineq = m.mu_in;
  sol.warm.kkt_residual = last_kkt;
  sol.warm.valid = true;

  sol.wall_time_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - t0)
                         .count();
  return sol;
}

}  // namespace oam
