#ifndef OAM_NLP_HPP_
#define OAM_NLP_HPP_

#include <functional>
#include <string>

#include "oam/geometry.hpp"

namespace oam {

// Smooth constrained program:
//   min f(z)  s.t.  c(z) = 0,  g(z) >= 0,  lb <= z <= ub.
// Callables must be deterministic. Jacobian pointers may be null when only
// values are needed.
struct NlpProblem {
  int n = 0;
  std::function<double(const VecX& z, VecX* grad)> objective;
  std::function<void(const VecX& z, VecX* values, MatX* jacobian)> eq_constraints;
  int n_eq = 0;
  std::function<void(const VecX& z, VecX* values, MatX* jacobian)> ineq_constraints;
  int n_ineq = 0;
  VecX lower_bounds;  // empty or size n
  VecX upper_bounds;
  VecX initial_guess;
  // Optional constant diagonal curvature of the objective; sharpens the
  // Gauss-Newton model of the inner solver when available.
  VecX objective_hessian_diag;
  // Optional least-squares block: the total objective additionally includes
  // |r(z)|^2, modeled with Gauss-Newton curvature 2 J^T J.
  std::function<void(const VecX& z, VecX* values, MatX* jacobian)> residuals;
  int n_residuals = 0;
  // Optional curvature beyond the Gauss-Newton terms (added into the inner
  // model Hessian; does not alter values or gradients).
  std::function<void(const VecX& z, MatX* hessian)> objective_hessian;
};

struct NlpOptions {
  double tol_eq = 1e-5;
  double tol_ineq = 1e-6;
  double tol_grad = 1e-6;
  int max_outer = 30;
  int max_inner = 400;
  bool use_log_barrier = false;  // default: squared-hinge / AL on g
  bool check_derivatives = false;
  double fd_step = 1e-6;
  double penalty_eq_init = 10.0;
  double penalty_ineq_init = 10.0;
  double penalty_growth = 10.0;
  double penalty_cap = 1e9;
  // Inner progress floor: five iterations gaining less than this (relative)
  // count as stationary at the solver's working precision.
  double progress_rtol = 1e-10;
};

enum class NlpStatus { Converged, MaxIter, Infeasible, NumericalFailure };

std::string to_string(NlpStatus s);

struct NlpWarmStart {
  VecX z;
  VecX lambda_eq;
  VecX lambda_ineq;
  double penalty_eq = 0.0;
  double penalty_ineq = 0.0;
  double kkt_residual = 0.0;  // stationarity achieved when this state was saved
  bool valid = false;
};

struct NlpSolution {
  VecX z;
  double objective_value = 0.0;
  double max_eq_violation = 0.0;
  double min_ineq_value = 0.0;  // +inf when the problem has no inequalities
  int outer_iterations = 0;
  int inner_iterations = 0;  // evaluate/step cycles summed over outer loops
  NlpStatus status = NlpStatus::MaxIter;
  double wall_time_ms = 0.0;
  NlpWarmStart warm;  // state for warm-started re-solves
};

NlpSolution nlp_solve(const NlpProblem& problem, const NlpOptions& opts = {},
                      const NlpWarmStart* warm = nullptr);

// Finite-difference gradient/Jacobian validation used by debug mode and tests.
// Returns the worst relative mismatch.
double nlp_check_derivatives(const NlpProblem& problem, const VecX& z,
                             double fd_step = 1e-6);

}  // namespace oam

#endif  // OAM_NLP_HPP_
