#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <random>

#include "oam/planner_nmpc.hpp"

using namespace oam;

namespace {

Mat3 rot_y(double a) { return exp_so3(Vec3(0, a, 0)); }

ManipulatorModel default_arm() { return ManipulatorModel{}; }

std::vector<EeRef> constant_window(const EeRef& ref, int n) {
  return std::vector<EeRef>(n, ref);
}

// Reference window marching from the current EE pose toward a goal at a
// fixed speed, the shape the offline trajectory produces for the NMPC.
std::vector<EeRef> marching_window(const WholeBodyConfig& x,
                                   const ManipulatorModel& model,
                                   const Vec3& goal_p, const Mat3& goal_R,
                                   double speed, double t0, int n, double dt) {
  const FkResult fk = forward_kinematics(x.p, x.R, x.theta, model);
  const Vec3 d = goal_p - fk.ee.p;
  const double dist = d.norm();
  const Vec3 dir = dist > 1e-9 ? Vec3(d / dist) : Vec3::Zero();
  const Vec3 rot = log_so3(fk.ee.R.transpose() * goal_R);
  std::vector<EeRef> w(n);
  for (int k = 0; k < n; ++k) {
    const double s = std::min(dist, speed * (t0 + k * dt));
    w[k].p = fk.ee.p + s * dir;
    w[k].v = (s < dist ? speed : 0.0) * dir;
    const double a = dist > 1e-9 ? s / dist : 1.0;
    w[k].R = fk.ee.R * exp_so3(a * rot);
  }
  return w;
}

EeRef ee_ref_at(const WholeBodyConfig& x, const ManipulatorModel& model) {
  const FkResult fk = forward_kinematics(x.p, x.R, x.theta, model);
  EeRef ref;
  ref.p = fk.ee.p;
  ref.R = fk.ee.R;
  return ref;
}

}  // namespace

TEST_CASE("whole-body Euler step") {
  WholeBodyConfig x;
  x.p = Vec3(0, 0, 0);
  WholeBodyInput u;

  SUBCASE("zero input leaves the state unchanged") {
    const WholeBodyConfig y = wb_kinematics_step(x, u, 0.1);
    CHECK((y.p - x.p).norm() == 0.0);
    CHECK((y.R - x.R).norm() == 0.0);
    CHECK((y.theta - x.theta).norm() == 0.0);
  }

  SUBCASE("angular rate right-multiplies the exponential") {
    u.omega = Vec3(0, 0, 1);
    const WholeBodyConfig y = wb_kinematics_step(x, u, 0.1);
    CHECK((y.R - exp_so3(Vec3(0, 0, 0.1))).norm() < 1e-15);
  }

  SUBCASE("velocity integrates the position") {
    u.v = Vec3(1, 2, 3);
    const WholeBodyConfig y = wb_kinematics_step(x, u, 0.1);
    CHECK((y.p - Vec3(0.1, 0.2, 0.3)).norm() < 1e-15);
  }
}

TEST_CASE("manipulability of the planar arm") {
  const ManipulatorModel model = default_arm();

  SUBCASE("stretched arm is singular") {
    CHECK(manipulability(Vec3::Zero(), model, 0.01, 0.01) ==
          doctest::Approx(0.0).epsilon(1e-12));
  }

  SUBCASE("bent elbow has positive manipulability") {
    CHECK(manipulability(Vec3(0.0, M_PI / 2, 0.0), model, 0.01, 0.01) > 1e-8);
  }

  SUBCASE("base joint offset does not change the planar index") {
    const double ref = manipulability(Vec3(0.0, 0.9, -0.4), model, 0.01, 0.01);
    for (double off = -1.2; off <= 1.2; off += 0.2) {
      CHECK(manipulability(Vec3(off, 0.9, -0.4), model, 0.01, 0.01) ==
            doctest::Approx(ref).epsilon(1e-9));
    }
  }
}

TEST_CASE("stage cost composition") {
  const ManipulatorModel model = default_arm();
  NmpcParams params;
  WholeBodyConfig x;
  x.p = Vec3(0.3, -0.1, 0.9);
  x.R = rot_y(0.4);
  x.theta = Vec3(0.1, 0.7, -0.3);
  const EeRef ref = ee_ref_at(x, model);
  const WholeBodyInput u0;

  SUBCASE("exact pose with zero input leaves only the manipulability reward") {
    const double c = stage_cost(x, ref, u0, model, params);
    CHECK(c == doctest::Approx(-manipulability(x.theta, model, params.mu_v,
                                               params.mu_omega))
                   .epsilon(1e-9));
  }

  SUBCASE("ten-centimeter EE offset costs Q_p * 0.01") {
    EeRef shifted = ref;
    shifted.p += Vec3(0.1, 0, 0);
    const double c = stage_cost(x, shifted, u0, model, params);
    const double phi_m = manipulability(x.theta, model, params.mu_v, params.mu_omega);
    CHECK(c == doctest::Approx(5.0 * 0.01 - phi_m).epsilon(1e-9));
  }

  SUBCASE("anti-aligned tool orientation adds 4 * tr(I - Rz(pi)) = 16") {
    EeRef flipped = ref;
    flipped.R = ref.R * exp_so3(Vec3(0, 0, M_PI));
    const double c = stage_cost(x, flipped, u0, model, params);
    const double phi_m = manipulability(x.theta, model, params.mu_v, params.mu_omega);
    CHECK(c == doctest::Approx(16.0 - phi_m).epsilon(1e-9));
  }

  SUBCASE("input cost uses the block weights") {
    WholeBodyInput u;
    u.v = Vec3(1, 0, 0);
    u.omega = Vec3(0, 2, 0);
    u.theta_dot = Vec3(0, 0, 3);
    const double c = stage_cost(x, ref, u, model, params) -
                     stage_cost(x, ref, u0, model, params);
    CHECK(c == doctest::Approx(0.01 * 1 + 0.01 * 4 + 0.1 * 9).epsilon(1e-12));
  }
}

TEST_CASE("transcription gradients match finite differences") {
  // Small horizon keeps the FD sweep cheap while covering every term:
  // EE costs, manipulability, obstacle pairs, ground rows, the self pair
  // and the joint polytope.
  const ManipulatorModel model = default_arm();
  const BodyEllipsoidSet bodies = BodyEllipsoidSet::default_for(model);
  NmpcParams params;
  params.T_H = 0.4;  // N = 4

  ObstacleSet obs;
  obs.has_ground = true;
  obs.ground_height = 0.0;
  obs.ellipsoids.push_back(
      Ellipsoid::from_semi_axes(Vec3(1.2, 0.2, 0.8), Vec3(0.3, 0.25, 0.2)));

  WholeBodyConfig x0;
  x0.p = Vec3(0, 0, 0.9);
  x0.R = rot_y(0.3);
  x0.theta = Vec3(0.2, 0.5, -0.3);

  EeRef goal;
  goal.p = Vec3(0.6, 0.1, 0.7);
  goal.R = rot_y(1.2);

  const int N = params.horizon();
  const auto window = constant_window(goal, N + 1);

  // nlp_solve validates the analytic gradient and Jacobians against finite
  // differences at its starting point when check_derivatives is on. The
  // first solve checks at z = 0; re-solves then start from the previous
  // (nonzero) solution, exercising the exponential chain with E != I.
  NmpcParams checked = params;
  checked.nlp.check_derivatives = true;
  NmpcPlanner probe(model, bodies, checked);
  TrajectoryPlan plan;
  CHECK_NOTHROW(plan = probe.solve(x0, window, obs, 0.0));
  REQUIRE(plan.status != NlpStatus::NumericalFailure);
  double vnorm = 0.0;
  for (const auto& u : plan.inputs) vnorm += u.omega.norm() + u.v.norm();
  CHECK(vnorm > 1e-3);  // the warm point is genuinely nonzero
  CHECK_NOTHROW(probe.solve(x0, window, obs, 0.0, /*shift_warm=*/false));
  // Perturbed initial states move the FK evaluation points.
  std::mt19937 rng(31);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  for (int trial = 0; trial < 2; ++trial) {
    WholeBodyConfig xr = x0;
    xr.p += Vec3(u(rng), u(rng), u(rng));
    xr.R = x0.R * exp_so3(Vec3(u(rng), u(rng), u(rng)));
    xr.theta += Vec3(u(rng), u(rng), u(rng));
    CHECK_NOTHROW(probe.solve(xr, window, obs, trial * 0.1));
  }
}

TEST_CASE("already at the reference: inputs stay below 1e-3") {
  const ManipulatorModel model = default_arm();
  const BodyEllipsoidSet bodies = BodyEllipsoidSet::default_for(model);
  NmpcParams params;
  ObstacleSet obs;
  obs.has_ground = false;

  WholeBodyConfig x0;
  x0.p = Vec3(0, 0, 1.0);
  x0.theta = Vec3(0.0, 0.9, -0.5);  // bent elbow, decent manipulability
  const EeRef ref = ee_ref_at(x0, model);

  NmpcPlanner planner(model, bodies, params);
  const TrajectoryPlan plan =
      planner.solve(x0, constant_window(ref, params.horizon() + 1), obs, 0.0);
  REQUIRE(plan.feasible);
  for (const auto& u : plan.inputs) {
    CHECK(u.v.lpNorm<Eigen::Infinity>() < 1e-3);
    CHECK(u.omega.lpNorm<Eigen::Infinity>() < 1e-3);
    CHECK(u.theta_dot.lpNorm<Eigen::Infinity>() < 1e-3);
  }
}

TEST_CASE("goal behind an obstacle keeps every certificate above margin") {
  const ManipulatorModel model = default_arm();
  const BodyEllipsoidSet bodies = BodyEllipsoidSet::default_for(model);
  NmpcParams params;
  ObstacleSet obs;
  obs.has_ground = false;
  obs.ellipsoids.push_back(
      Ellipsoid::from_semi_axes(Vec3(1.1, 0, 1.0), Vec3(0.3, 0.3, 0.3)));

  WholeBodyConfig x0;
  x0.p = Vec3(0, 0, 1.0);
  x0.theta = Vec3(0, 0.6, -0.3);

  // The reference walks straight at a goal behind the obstacle; tracking
  // must give way to the separation certificates.
  const Vec3 goal_p(2.4, 0, 1.0);
  const Mat3 goal_R = rot_y(0.8);

  NmpcPlanner planner(model, bodies, params);
  TrajectoryPlan plan;
  double t = 0.0;
  for (int i = 0; i < 8; ++i) {  // receding-horizon cycles
    const auto window = marching_window(x0, model, goal_p, goal_R, 0.4, 0.0,
                                        params.horizon() + 1, params.dt);
    plan = planner.solve(x0, window, obs, t);
    REQUIRE(plan.feasible);
    CHECK(plan.min_certificate >= params.margin - 1e-9);
    x0 = plan.states[3];
    t += 3 * params.dt;
  }

  const PlanValidation val = validate_plan(plan, plan.states[0], obs, model,
                                           bodies, params);
  CHECK(val.ok);
  CHECK(val.max_dynamics_residual < 1e-6);
  CHECK(val.max_orthonormality < 1e-9);
}

TEST_CASE("far goal pins inputs at the bounds without exceeding them") {
  const ManipulatorModel model = default_arm();
  const BodyEllipsoidSet bodies = BodyEllipsoidSet::default_for(model);
  NmpcParams params;
  ObstacleSet obs;
  obs.has_ground = false;

  WholeBodyConfig x0;
  x0.p = Vec3(0, 0, 1.0);
  x0.theta = Vec3(0, 0.5, -0.2);

  // Reference outruns the velocity bound, so tracking pins it.
  NmpcParams no_orient = params;
  no_orient.use_orientation_cost = false;
  NmpcPlanner planner(model, bodies, no_orient);
  const auto window = marching_window(x0, model, Vec3(8.0, 0, 1.0),
                                      Mat3::Identity(), 2.5, 0.0,
                                      params.horizon() + 1, params.dt);
  const TrajectoryPlan plan = planner.solve(x0, window, obs, 0.0);
  REQUIRE(plan.feasible);

  double vmax = 0.0;
  for (const auto& u : plan.inputs) {
    vmax = std::max(vmax, u.v.lpNorm<Eigen::Infinity>());
    CHECK(u.v.lpNorm<Eigen::Infinity>() <= params.v_max + 1e-12);
    CHECK(u.omega.lpNorm<Eigen::Infinity>() <= params.omega_max + 1e-12);
    CHECK(u.theta_dot.lpNorm<Eigen::Infinity>() <= params.theta_dot_max + 1e-12);
  }
  CHECK(vmax == doctest::Approx(params.v_max).epsilon(1e-6));
}

TEST_CASE("receding-horizon consistency under a frozen reference") {
  const ManipulatorModel model = default_arm();
  const BodyEllipsoidSet bodies = BodyEllipsoidSet::default_for(model);
  NmpcParams params;
  params.nlp.tol_grad = 1e-7;  // tight solves for the comparison
  ObstacleSet obs;
  obs.has_ground = false;

  WholeBodyConfig x0;
  x0.p = Vec3(0, 0, 1.0);
  x0.theta = Vec3(0, 0.7, -0.4);
  EeRef goal;
  goal.p = ee_ref_at(x0, model).p + Vec3(0.15, 0.05, 0.08);
  goal.R = ee_ref_at(x0, model).R * rot_y(0.3);

  NmpcPlanner planner(model, bodies, params);
  const auto window = constant_window(goal, params.horizon() + 1);
  const TrajectoryPlan plan1 = planner.solve(x0, window, obs, 0.0);
  REQUIRE(plan1.feasible);
  const TrajectoryPlan plan2 =
      planner.solve(plan1.states[1], window, obs, params.dt);
  REQUIRE(plan2.feasible);

  const int N = params.horizon();
  for (int k = 0; k + 1 <= N; ++k) {
    CHECK((plan2.states[k].p - plan1.states[k + 1].p).lpNorm<Eigen::Infinity>() <
          1e-4);
    CHECK((plan2.states[k].R - plan1.states[k + 1].R).lpNorm<Eigen::Infinity>() <
          1e-4);
    CHECK((plan2.states[k].theta - plan1.states[k + 1].theta)
              .lpNorm<Eigen::Infinity>() < 1e-4);
  }
}

TEST_CASE("warm-started re-solve of an unchanged problem is immediate") {
  const ManipulatorModel model = default_arm();
  const BodyEllipsoidSet bodies = BodyEllipsoidSet::default_for(model);
  NmpcParams params;
  ObstacleSet obs;
  obs.has_ground = false;
  obs.ellipsoids.push_back(
      Ellipsoid::from_semi_axes(Vec3(0.9, 0, 1.0), Vec3(0.3, 0.3, 0.3)));

  WholeBodyConfig x0;
  x0.p = Vec3(0, 0, 1.0);
  x0.theta = Vec3(0, 0.6, -0.3);
  EeRef goal;
  goal.p = ee_ref_at(x0, model).p + Vec3(0.25, -0.1, 0.1);
  goal.R = ee_ref_at(x0, model).R * rot_y(0.4);

  NmpcPlanner planner(model, bodies, params);
  const auto window = constant_window(goal, params.horizon() + 1);
  const TrajectoryPlan first = planner.solve(x0, window, obs, 0.0);
  REQUIRE(first.feasible);
  const TrajectoryPlan again =
      planner.solve(x0, window, obs, 0.0, /*shift_warm=*/false);
  CHECK(again.feasible);
  CHECK(again.inner_iterations <= 3);
}

TEST_CASE("disabling collision constraints lets the plan dive through") {
  const ManipulatorModel model = default_arm();
  const BodyEllipsoidSet bodies = BodyEllipsoidSet::default_for(model);
  ObstacleSet obs;
  obs.has_ground = true;
  obs.ground_height = 0.0;

  WholeBodyConfig x0;
  x0.p = Vec3(0, 0, 0.55);
  x0.theta = Vec3(0, 0.4, -0.2);
  EeRef goal;
  goal.p = Vec3(0.4, 0, 0.02);  // essentially on the floor
  goal.R = rot_y(2.0);

  NmpcParams off;
  off.collision_enabled = false;
  NmpcPlanner unconstrained(model, bodies, off);
  TrajectoryPlan plan;
  double t = 0;
  for (int i = 0; i < 12; ++i) {
    const auto window = marching_window(x0, model, goal.p, goal.R, 0.4, 0.0,
                                        off.horizon() + 1, off.dt);
    plan = unconstrained.solve(x0, window, ObstacleSet{{}, 0.0, false}, t);
    REQUIRE(plan.feasible);
    x0 = plan.states[2];
    t += 2 * off.dt;
  }
  // Measured against the true geometry the certificate goes negative.
  NmpcParams measure;  // collision families enabled for validation only
  const PlanValidation val =
      validate_plan(plan, plan.states[0], obs, model, bodies, measure);
  CHECK(val.min_certificate < 0.0);

  // With the constraints on, the same setup keeps the certificate positive.
  NmpcParams on;
  NmpcPlanner constrained(model, bodies, on);
  WholeBodyConfig x1;
  x1.p = Vec3(0, 0, 0.55);
  x1.theta = Vec3(0, 0.4, -0.2);
  const auto window = marching_window(x1, model, goal.p, goal.R, 0.4, 0.0,
                                      on.horizon() + 1, on.dt);
  const TrajectoryPlan safe = constrained.solve(x1, window, obs, 0.0);
  REQUIRE(safe.feasible);
  CHECK(safe.min_certificate >= on.margin - 1e-9);
}

TEST_CASE("plan sampling: knots, interpolation and staleness") {
  TrajectoryPlan plan;
  plan.stamp = 1.0;
  plan.dt = 0.1;
  const int N = 5;
  WholeBodyConfig x;
  x.p = Vec3(0, 0, 1);
  plan.states.push_back(x);
  for (int k = 0; k < N; ++k) {
    WholeBodyInput u;
    u.v = Vec3(0.2, 0, 0);
    u.omega = Vec3(0, 0, 0.3);
    u.theta_dot = Vec3(0.1, 0, 0);
    plan.inputs.push_back(u);
    x = wb_kinematics_step(x, u, plan.dt);
    plan.states.push_back(x);
  }

  Vec3 th, thd;
  SUBCASE("knot times reproduce knot values") {
    const Setpoint sp = plan_to_setpoints(plan, 1.2, &th, &thd);
    CHECK((sp.p_d - plan.states[2].p).norm() < 1e-12);
    CHECK((sp.R_d - plan.states[2].R).norm() < 1e-12);
    CHECK((th - plan.states[2].theta).norm() < 1e-12);
  }

  SUBCASE("midpoint interpolation with constant velocity") {
    const Setpoint sp = plan_to_setpoints(plan, 1.25, &th, &thd);
    CHECK((sp.p_d - 0.5 * (plan.states[2].p + plan.states[3].p)).norm() < 1e-12);
    CHECK((sp.v_d - Vec3(0.2, 0, 0)).norm() < 1e-12);
  }

  SUBCASE("beyond the horizon raises StalePlan") {
    CHECK_THROWS_AS(plan_to_setpoints(plan, 1.0 + 0.5 + 1e-3, &th, &thd), StalePlan);
    CHECK_THROWS_AS(plan_to_setpoints(plan, 0.9, &th, &thd), StalePlan);
  }
}

TEST_CASE("plan buffer and asynchronous worker") {
  const ManipulatorModel model = default_arm();
  const BodyEllipsoidSet bodies = BodyEllipsoidSet::default_for(model);
  NmpcParams params;
  PlanBuffer buffer;
  CHECK(buffer.latest() == nullptr);

  WholeBodyConfig x0;
  x0.p = Vec3(0, 0, 1.0);
  x0.theta = Vec3(0, 0.6, -0.3);
  EeRef goal;
  goal.p = Vec3(0.5, 0, 1.1);
  goal.R = rot_y(0.3);

  {
    NmpcWorker worker(NmpcPlanner(model, bodies, params), buffer);
    NmpcWorker::Request req;
    req.x0 = x0;
    req.window = constant_window(goal, params.horizon() + 1);
    req.obstacles.has_ground = false;
    req.stamp = 0.0;
    worker.request(req);
    const auto deadline =
        std::chrono::steady_clock::now() + std::chrono::seconds(20);
    while (worker.solves_completed() < 1 &&
           std::chrono::steady_clock::now() < deadline) {
      std::this_thread::yield();
    }
    CHECK(worker.solves_completed() >= 1);
  }
  const auto plan = buffer.latest();
  REQUIRE(plan != nullptr);
  CHECK(plan->feasible);
  CHECK(plan->stamp == 0.0);
}
