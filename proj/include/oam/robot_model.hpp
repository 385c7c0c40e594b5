#ifndef OAM_ROBOT_MODEL_HPP_
#define OAM_ROBOT_MODEL_HPP_

#include <array>
#include <string>
#include <vector>

#include "oam/collision.hpp"
#include "oam/geometry.hpp"

namespace oam {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Vec12 = Eigen::Matrix<double, 12, 1>;
using Mat6x12 = Eigen::Matrix<double, 6, 12>;

struct SingularAllocation : std::runtime_error {
  explicit SingularAllocation(const std::string& what) : std::runtime_error(what) {}
};

// Inertial parameters of the vehicle. The controller only sees the nominal
// values; the plant integrates the true ones.
struct PlantParams {
  double m = 2.13;      // kg, true mass
  Mat3 J_b = Vec3(0.02, 0.025, 0.035).asDiagonal();
  double m_bar = 2.13;  // kg, nominal mass
  Mat3 J_bar = Vec3(0.02, 0.025, 0.035).asDiagonal();
  double g = 9.81;      // m/s^2

  void validate() const;
};

struct AllocationConfig {
  double L = 0.018;   // m, half max rotor-to-rotor distance
  double k_f = 0.015; // m, thrust-to-torque ratio
  Vec12 W_diag = (Vec12() << 1, 1, 0.6, 0.6, 1, 1, 1, 1, 0.6, 0.6, 1, 1).finished();
  double max_condition = 1e12;

  void validate() const;
};

// 6x12 map from b = [F_i cos(a_i); F_i sin(a_i)] pairs to the body wrench.
Mat6x12 allocation_matrix(const AllocationConfig& cfg);

struct Wrench {
  Vec3 force = Vec3::Zero();   // N, body frame
  Vec3 torque = Vec3::Zero();  // N*m, body frame
};

struct ActuatorCommand {
  Vec6 thrust = Vec6::Zero();  // N
  Vec6 tilt = Vec6::Zero();    // rad
};

// b = W A^T (A W A^T)^{-1} [f; tau], then F_i = |b pair|, alpha_i = atan2.
// Throws SingularAllocation when A W A^T is too ill-conditioned.
ActuatorCommand allocate(const Wrench& wrench, const AllocationConfig& cfg);

// Inverse of the actuator recovery: b vector from thrusts and tilts.
Vec12 actuator_b_vector(const ActuatorCommand& cmd);

// Serial arm rigidly mounted on the base: n motion joints plus a binary
// gripper joint that never enters planning.
struct ManipulatorModel {
  std::vector<double> link_lengths = {0.15, 0.12, 0.10};  // m, motion links
  std::vector<Vec3> joint_axes = {Vec3::UnitY(), Vec3::UnitY(), Vec3::UnitY()};
  Vec3 mount_offset = Vec3(0.0, 0.0, 0.10);  // base frame, +z face
  // Self-collision polytope A_theta * theta <= b_theta (per-joint box default).
  MatX A_theta;
  VecX b_theta;

  ManipulatorModel();
  int joints() const { return static_cast<int>(link_lengths.size()); }
  void set_joint_box_limits(const VecX& lower, const VecX& upper);
  bool inside_limits(const VecX& theta, double tol = 0.0) const;
};

struct LinkPose {
  Vec3 p = Vec3::Zero();
  Mat3 R = Mat3::Identity();
};

// Chain poses relative to the base frame. joint_frames[i] is the frame of
// link i after joint i rotates (origin at joint i); ee is the tip.
struct RelativeKinematics {
  std::vector<LinkPose> links;
  LinkPose ee;
  std::vector<Vec3> joint_origins;  // base frame, origin of joint i
  std::vector<Vec3> world_axes;     // base frame axis of joint i at this config
};

RelativeKinematics forward_kinematics_relative(const VecX& theta,
                                               const ManipulatorModel& model);

struct FkResult {
  std::vector<LinkPose> links;  // world frame, one per motion link
  LinkPose ee;                  // world frame
};

FkResult forward_kinematics(const Vec3& p, const Mat3& R, const VecX& theta,
                            const ManipulatorModel& model);

// Position and orientation Jacobians of the end-effector relative to the
// base, both 3 x n. J_omega columns are the joint axes.
void relative_jacobians(const VecX& theta, const ManipulatorModel& model,
                        MatX* J_v, MatX* J_omega);

// Rigid-body ellipsoid decomposition: one body per entry. link_index 0 is the
// multirotor base, i >= 1 attaches to motion link i. Shapes are given at
// identity attitude and congruence-transform with the body.
struct BodyEllipsoidSet {
  struct Body {
    std::string name;
    int link_index = 0;
    Vec3 offset = Vec3::Zero();       // attachment frame offset
    Mat3 shape0 = Mat3::Identity();   // m^2, shape at identity orientation
    double ground_radius = 0.0;       // m, bounding sphere for z >= r
  };
  std::vector<Body> bodies;

  static BodyEllipsoidSet default_for(const ManipulatorModel& model);
  void validate() const;
};

std::vector<Ellipsoid> body_ellipsoids(const Vec3& p, const Mat3& R,
                                       const VecX& theta,
                                       const ManipulatorModel& model,
                                       const BodyEllipsoidSet& set);

std::vector<BodySphere> body_spheres(const Vec3& p, const Mat3& R,
                                     const VecX& theta,
                                     const ManipulatorModel& model,
                                     const BodyEllipsoidSet& set);

// Copy of the set with every body grown by delta (planning safety buffer).
BodyEllipsoidSet inflated_bodies(const BodyEllipsoidSet& set, double delta);

}  // namespace oam

#endif  // OAM_ROBOT_MODEL_HPP_
