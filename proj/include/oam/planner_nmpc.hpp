#ifndef OAM_PLANNER_NMPC_HPP_
#define OAM_PLANNER_NMPC_HPP_

#include <condition_variable>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "oam/collision.hpp"
#include "oam/controller.hpp"
#include "oam/nlp.hpp"
#include "oam/planner_offline.hpp"
#include "oam/robot_model.hpp"
#include "oam/state.hpp"

namespace oam {

struct StalePlan : std::runtime_error {
  explicit StalePlan(const std::string& what) : std::runtime_error(what) {}
};

struct WholeBodyInput {
  Vec3 v = Vec3::Zero();          // m/s
  Vec3 omega = Vec3::Zero();      // rad/s
  Vec3 theta_dot = Vec3::Zero();  // rad/s
};

// Euler step of the whole-body kinematics: p += dt v, R <- R exp(dt w^),
// theta += dt theta_dot.
WholeBodyConfig wb_kinematics_step(const WholeBodyConfig& x,
                                   const WholeBodyInput& u, double dt);

struct NmpcParams {
  double T_H = 1.5;  // s
  double dt = 0.1;   // s
  double Q_p = 5.0;
  double Q_R = 4.0;
  double mu_v = 0.01;
  double mu_omega = 0.01;  // used only for non-parallel-axis arms
  double r_v = 0.01;
  double r_omega = 0.01;
  double r_theta_dot = 0.1;
  double v_max = 1.0;                  // m/s
  double omega_max = 0.5 * M_PI;       // rad/s
  double theta_dot_max = 0.25 * M_PI;  // rad/s
  double margin = 1e-3;
  // Safety buffer absorbing closed-loop tracking error: the planner sees
  // robot bodies grown by this much, while run-level checks use the true
  // geometry.
  double body_inflation = 0.04;  // m
  bool use_orientation_cost = true;
  bool collision_enabled = true;
  bool self_collision_pair = true;  // base ellipsoid vs most distal link
  NlpOptions nlp;

  NmpcParams() {
    nlp.tol_grad = 2e-5;
    nlp.max_inner = 200;
    nlp.max_outer = 10;
  }
  int horizon() const { return static_cast<int>(std::lround(T_H / dt)); }
};

// Manipulability index. For a parallel-axis (planar) arm the positional
// Jacobian is projected onto the motion plane and the J_omega term, being
// constant, is dropped; otherwise the full two-determinant form is used.
double manipulability(const Vec3& theta, const ManipulatorModel& model,
                      double mu_v, double mu_omega);

// State cost of one knot plus the input cost.
double stage_cost(const WholeBodyConfig& x, const EeRef& ee_ref,
                  const WholeBodyInput& u, const ManipulatorModel& model,
                  const NmpcParams& params);

struct TrajectoryPlan {
  double stamp = 0.0;  // s, creation time
  double dt = 0.1;
  std::vector<WholeBodyConfig> states;  // N_H + 1
  std::vector<WholeBodyInput> inputs;   // N_H
  double min_certificate = 0.0;         // min over collision certificate rows
  bool feasible = false;
  double wall_time_ms = 0.0;
  int iterations = 0;
  int inner_iterations = 0;
  NlpStatus status = NlpStatus::MaxIter;

  double horizon() const { return dt * static_cast<double>(inputs.size()); }
};

// Independent post-solve check: re-rolls the dynamics from the inputs,
// verifies rotations, bounds, the joint polytope and all certificates.
struct PlanValidation {
  bool ok = false;
  double max_dynamics_residual = 0.0;
  double min_certificate = std::numeric_limits<double>::infinity();
  double max_orthonormality = 0.0;
  std::string failure;
};

PlanValidation validate_plan(const TrajectoryPlan& plan, const WholeBodyConfig& x0,
                             const ObstacleSet& obstacles,
                             const ManipulatorModel& model,
                             const BodyEllipsoidSet& bodies,
                             const NmpcParams& params);

class NmpcPlanner {
 public:
  NmpcPlanner(ManipulatorModel model, BodyEllipsoidSet bodies, NmpcParams params);

  // window must provide horizon()+1 reference samples at the plan knots.
  // Throws PlanInfeasible when the solve fails or post-validation rejects.
  TrajectoryPlan solve(const WholeBodyConfig& x0, const std::vector<EeRef>& window,
                       const ObstacleSet& obstacles, double stamp,
                       bool shift_warm = true);

  void reset_warm() { warm_.valid = false; }
  const NmpcParams& params() const { return params_; }
  const ManipulatorModel& model() const { return model_; }
  const BodyEllipsoidSet& bodies() const { return bodies_; }

 private:
  ManipulatorModel model_;
  BodyEllipsoidSet bodies_;
  BodyEllipsoidSet bodies_plan_;  // inflated by the tracking safety buffer
  NmpcParams params_;
  NlpWarmStart warm_;
};

// Samples a plan into controller setpoints: zero-order hold on inputs,
// linear interpolation on p, geodesic interpolation on R; accelerations by
// finite-differencing the input sequence. Throws StalePlan outside the
// plan's time range.
Setpoint plan_to_setpoints(const TrajectoryPlan& plan, double t, Vec3* theta_d,
                           Vec3* theta_dot_d);

// Latest-plan mailbox between the planning worker and the control loop.
class PlanBuffer {
 public:
  void publish(std::shared_ptr<const TrajectoryPlan> plan);
  std::shared_ptr<const TrajectoryPlan> latest() const;

 private:
  mutable std::mutex mutex_;
  std::shared_ptr<const TrajectoryPlan> plan_;
};

// Asynchronous replanning worker: accepts solve requests, runs them on its
// own thread and publishes immutable snapshots into a PlanBuffer.
class NmpcWorker {
 public:
  struct Request {
    WholeBodyConfig x0;
    std::vector<EeRef> window;
    ObstacleSet obstacles;
    double stamp = 0.0;
  };

  NmpcWorker(NmpcPlanner planner, PlanBuffer& buffer);
  ~NmpcWorker();

  void request(Request r);  // keeps only the newest pending request
  int solves_completed() const;
  void stop();

 private:
  void run();

  NmpcPlanner planner_;
  PlanBuffer& buffer_;
  std::optional<Request> pending_;
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  bool stop_ = false;
  int completed_ = 0;
  std::thread thread_;
};

}  // namespace oam

#endif  // OAM_PLANNER_NMPC_HPP_
