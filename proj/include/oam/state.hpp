#ifndef OAM_STATE_HPP_
#define OAM_STATE_HPP_

#include "oam/geometry.hpp"

namespace oam {

// Ground-truth plant state and controller feedback.
struct RigidBodyState {
  Vec3 p = Vec3::Zero();       // m, world
  Vec3 v = Vec3::Zero();       // m/s, world
  Mat3 R = Mat3::Identity();
  Vec3 omega = Vec3::Zero();   // rad/s, body
  VecX theta = VecX::Zero(3);  // rad, arm motion joints
  VecX theta_dot = VecX::Zero(3);

  bool finite() const {
    return p.allFinite() && v.allFinite() && R.allFinite() && omega.allFinite() &&
           theta.allFinite() && theta_dot.allFinite();
  }
};

// NMPC decision state: base pose plus joint angles.
struct WholeBodyConfig {
  Vec3 p = Vec3::Zero();
  Mat3 R = Mat3::Identity();
  Vec3 theta = Vec3::Zero();
};

}  // namespace oam

#endif  // OAM_STATE_HPP_
