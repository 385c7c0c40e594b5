#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "oam/nlp.hpp"

using namespace oam;

namespace {

// min (x-1)^2 subject to x >= 2.
NlpProblem active_bound_problem() {
  NlpProblem p;
  p.n = 1;
  p.objective = [](const VecX& z, VecX* g) {
    if (g) {
      g->resize(1);
      (*g)(0) = 2.0 * (z(0) - 1.0);
    }
    return (z(0) - 1.0) * (z(0) - 1.0);
  };
  p.n_ineq = 1;
  p.ineq_constraints = [](const VecX& z, VecX* v, MatX* J) {
    if (v) {
      v->resize(1);
      (*v)(0) = z(0) - 2.0;
    }
    if (J) {
      J->setZero(1, 1);
      (*J)(0, 0) = 1.0;
    }
  };
  p.initial_guess = VecX::Zero(1);
  return p;
}

}  // namespace

TEST_CASE("active inequality: min (x-1)^2 s.t. x >= 2") {
  const NlpSolution sol = nlp_solve(active_bound_problem());
  CHECK(sol.status == NlpStatus::Converged);
  CHECK(sol.z(0) == doctest::Approx(2.0).epsilon(1e-5));
  CHECK(sol.objective_value == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(sol.min_ineq_value >= -1e-6);
}

TEST_CASE("equality projection: min 0.5 z^T z s.t. 1^T z = 1") {
  NlpProblem p;
  p.n = 2;
  p.objective = [](const VecX& z, VecX* g) {
    if (g) *g = z;
    return 0.5 * z.squaredNorm();
  };
  p.n_eq = 1;
  p.eq_constraints = [](const VecX& z, VecX* v, MatX* J) {
    if (v) {
      v->resize(1);
      (*v)(0) = z.sum() - 1.0;
    }
    if (J) {
      J->setOnes(1, 2);
    }
  };
  p.initial_guess = VecX::Zero(2);
  const NlpSolution sol = nlp_solve(p);
  CHECK(sol.status == NlpStatus::Converged);
  CHECK(sol.z(0) == doctest::Approx(0.5).epsilon(1e-5));
  CHECK(sol.z(1) == doctest::Approx(0.5).epsilon(1e-5));
  CHECK(sol.max_eq_violation <= 1e-5);
}

TEST_CASE("empty feasible set reports Infeasible") {
  NlpProblem p;
  p.n = 1;
  p.objective = [](const VecX& z, VecX* g) {
    if (g) {
      g->resize(1);
      (*g)(0) = 2.0 * z(0);
    }
    return z.squaredNorm();
  };
  p.n_ineq = 2;  // x >= 1 and x <= 0
  p.ineq_constraints = [](const VecX& z, VecX* v, MatX* J) {
    if (v) {
      v->resize(2);
      (*v)(0) = z(0) - 1.0;
      (*v)(1) = -z(0);
    }
    if (J) {
      J->setZero(2, 1);
      (*J)(0, 0) = 1.0;
      (*J)(1, 0) = -1.0;
    }
  };
  p.initial_guess = VecX::Zero(1);
  NlpOptions opts;
  opts.max_outer = 25;
  const NlpSolution sol = nlp_solve(p, opts);
  CHECK(sol.status == NlpStatus::Infeasible);
}

TEST_CASE("convex QPs match the direct KKT solve") {
  std::mt19937 rng(3);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 8, m = 3;
    MatX B = MatX::NullaryExpr(n, n, [&] { return gauss(rng); });
    MatX H = B.transpose() * B + 0.5 * MatX::Identity(n, n);
    VecX g0 = VecX::NullaryExpr(n, [&] { return gauss(rng); });
    MatX A = MatX::NullaryExpr(m, n, [&] { return gauss(rng); });
    VecX b = VecX::NullaryExpr(m, [&] { return gauss(rng); });

    NlpProblem p;
    p.n = n;
    p.objective = [&](const VecX& z, VecX* grad) {
      if (grad) *grad = H * z + g0;
      return 0.5 * z.dot(H * z) + g0.dot(z);
    };
    p.n_eq = m;
    p.eq_constraints = [&](const VecX& z, VecX* v, MatX* J) {
      if (v) *v = A * z - b;
      if (J) *J = A;
    };
    p.initial_guess = VecX::Zero(n);

    NlpOptions opts;  // tolerances sized for the 1e-6 solution check
    opts.tol_eq = 1e-8;
    opts.tol_grad = 1e-7;
    opts.max_outer = 50;
    const NlpSolution sol = nlp_solve(p, opts);
    REQUIRE(sol.status == NlpStatus::Converged);

    MatX K = MatX::Zero(n + m, n + m);
    K.topLeftCorner(n, n) = H;
    K.topRightCorner(n, m) = A.transpose();
    K.bottomLeftCorner(m, n) = A;
    VecX rhs(n + m);
    rhs << -g0, b;
    const VecX z_star = K.fullPivLu().solve(rhs).head(n);
    CHECK((sol.z - z_star).lpNorm<Eigen::Infinity>() < 1e-6);
  }
}

TEST_CASE("warm-started re-solve finishes within three inner iterations") {
  NlpProblem p = active_bound_problem();
  const NlpSolution first = nlp_solve(p);
  REQUIRE(first.status == NlpStatus::Converged);
  const NlpSolution again = nlp_solve(p, {}, &first.warm);
  CHECK(again.status == NlpStatus::Converged);
  CHECK(again.inner_iterations <= 3);
  CHECK(again.z(0) == doctest::Approx(first.z(0)));
}

TEST_CASE("box bounds handled by projection") {
  NlpProblem p;
  p.n = 2;
  p.objective = [](const VecX& z, VecX* g) {
    const VecX d = z - VecX::Constant(2, 5.0);
    if (g) *g = 2.0 * d;
    return d.squaredNorm();
  };
  p.lower_bounds = VecX::Constant(2, -1.0);
  p.upper_bounds = VecX::Constant(2, 2.0);
  p.initial_guess = VecX::Zero(2);
  const NlpSolution sol = nlp_solve(p);
  CHECK(sol.status == NlpStatus::Converged);
  CHECK(sol.z(0) == doctest::Approx(2.0));
  CHECK(sol.z(1) == doctest::Approx(2.0));
}

TEST_CASE("log-barrier path from a strictly feasible start") {
  NlpProblem p = active_bound_problem();
  p.initial_guess = VecX::Constant(1, 5.0);
  NlpOptions opts;
  opts.use_log_barrier = true;
  const NlpSolution sol = nlp_solve(p, opts);
  CHECK(sol.status == NlpStatus::Converged);
  CHECK(sol.z(0) == doctest::Approx(2.0).epsilon(1e-4));
  CHECK(sol.min_ineq_value >= -1e-6);
}

TEST_CASE("derivative checker flags a corrupted gradient") {
  NlpProblem good = active_bound_problem();
  CHECK(nlp_check_derivatives(good, VecX::Constant(1, 0.7)) < 1e-6);

  NlpProblem bad = good;
  bad.objective = [](const VecX& z, VecX* g) {
    if (g) {
      g->resize(1);
      (*g)(0) = 2.0 * (z(0) - 1.0) + 0.3;  // wrong on purpose
    }
    return (z(0) - 1.0) * (z(0) - 1.0);
  };
  CHECK(nlp_check_derivatives(bad, VecX::Constant(1, 0.7)) > 1e-4);
  NlpOptions opts;
  opts.check_derivatives = true;
  CHECK_THROWS_AS(nlp_solve(bad, opts), std::runtime_error);
}

TEST_CASE("non-finite initial guess is a numerical failure") {
  NlpProblem p = active_bound_problem();
  p.initial_guess = VecX::Constant(1, std::numeric_limits<double>::quiet_NaN());
  const NlpSolution sol = nlp_solve(p);
  CHECK(sol.status == NlpStatus::NumericalFailure);
}

TEST_CASE("converged status implies the violation invariants") {
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 5; ++trial) {
    NlpProblem p = active_bound_problem();
    p.initial_guess = VecX::Constant(1, u(rng));
    NlpOptions opts;
    const NlpSolution sol = nlp_solve(p, opts);
    if (sol.status == NlpStatus::Converged) {
      CHECK(sol.max_eq_violation <= opts.tol_eq);
      CHECK(sol.min_ineq_value >= -opts.tol_ineq);
    }
  }
}
