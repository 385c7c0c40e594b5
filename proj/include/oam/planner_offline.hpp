#ifndef OAM_PLANNER_OFFLINE_HPP_
#define OAM_PLANNER_OFFLINE_HPP_

#include <string>
#include <vector>

#include "oam/collision.hpp"
#include "oam/geometry.hpp"
#include "oam/nlp.hpp"

namespace oam {

struct PlanInfeasible : std::runtime_error {
  explicit PlanInfeasible(const std::string& what) : std::runtime_error(what) {}
};

struct StartInCollision : std::runtime_error {
  explicit StartInCollision(const std::string& what) : std::runtime_error(what) {}
};

// [p; v; vdot] stack of the end-effector point model.
struct EeTranslationalState {
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 a = Vec3::Zero();
};

struct EeRotationalState {
  Mat3 R = Mat3::Identity();
  Vec3 omega = Vec3::Zero();
  Vec3 omega_dot = Vec3::Zero();
};

// Staged RK4 update of the translational triple integrator (exact for
// piecewise-constant jerk).
EeTranslationalState ee_kinematics_step_translation(const EeTranslationalState& x,
                                                    const Vec3& jerk, double dt);

// Rotation advances by the exponential of the RK4-averaged body rate; the
// rate/acceleration pair integrates as a double integrator.
EeRotationalState ee_kinematics_step_rotation(const EeRotationalState& x,
                                              const Vec3& omega_ddot, double dt);

struct OfflinePlanParams {
  double T_f = 15.0;  // s
  double dt = 0.1;    // s
  Mat3 R_v = Mat3::Identity();
  Mat3 R_omega = Mat3::Identity();
  double gamma_rate = 3.0;   // linear class-K slope in the rate barrier
  double margin = 1e-3;      // strict inequalities become g >= margin
  double ee_radius = 0.05;   // m, EE bounding sphere; inflates obstacles
  NlpOptions nlp;

  OfflinePlanParams() {
    nlp.tol_eq = 1e-6;
    nlp.max_inner = 600;
  }
  int knots() const { return static_cast<int>(std::lround(T_f / dt)); }
};

struct EeTranslationalPlan {
  double dt = 0.1;
  std::vector<EeTranslationalState> knots;  // N+1 entries
  std::vector<Vec3> jerks;                  // N entries
  NlpSolution stats;
};

struct EeRotationalPlan {
  double dt = 0.1;
  std::vector<EeRotationalState> knots;
  std::vector<Vec3> angular_jerks;
  NlpSolution stats;
};

// Jerk-minimizing point trajectory from rest at start to rest at goal with
// barrier-rate collision constraints at every knot.
EeTranslationalPlan plan_ee_translation(const Vec3& start, const Vec3& goal,
                                        const ObstacleSet& obstacles,
                                        const OfflinePlanParams& params);

// Angular-jerk-minimizing reorientation from rest to rest; the terminal
// orientation is enforced through the trace residual tr(I - Rg^T R(N)).
EeRotationalPlan plan_ee_rotation(const Mat3& R_start, const Mat3& R_goal,
                                  const OfflinePlanParams& params);

// One sample of the end-effector reference consumed by the online planner.
struct EeRef {
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Mat3 R = Mat3::Identity();
  Vec3 omega = Vec3::Zero();
};

class EeTrajectory {
 public:
  EeTrajectory() = default;
  EeTrajectory(const EeTranslationalPlan& trans, const EeRotationalPlan* rot,
               double t0);

  // Clamped sampling: holds the first/terminal knot outside [t0, t0 + T_f].
  EeRef sample(double t) const;

  double t0() const { return t0_; }
  double dt() const { return dt_; }
  double duration() const { return dt_ * (knots_.empty() ? 0 : knots_.size() - 1); }
  const std::vector<EeRef>& knots() const { return knots_; }
  bool has_orientation() const { return has_orientation_; }

  std::string to_json() const;
  static EeTrajectory from_json(const std::string& text);

 private:
  double t0_ = 0.0;
  double dt_ = 0.1;
  bool has_orientation_ = false;
  std::vector<EeRef> knots_;
};

}  // namespace oam

#endif  // OAM_PLANNER_OFFLINE_HPP_
