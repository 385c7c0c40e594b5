#include <cmath>

#include "oam/config.hpp"
#include "oam/sim.hpp"

namespace oam {

namespace {

Mat3 rot_y(double a) { return exp_so3(Vec3(0, a, 0)); }
Mat3 rot_z(double a) { return exp_so3(Vec3(0, 0, a)); }

RigidBodyState hover_start(const Vec3& p, const Mat3& R) {
  RigidBodyState s;
  s.p = p;
  s.R = R;
  s.theta = VecX::Zero(3);
  s.theta_dot = VecX::Zero(3);
  return s;
}

Scenario ground_base(const OamConfig& cfg) {
  Scenario s;
  s.initial = hover_start(Vec3(0, 0, 0.8), Mat3::Identity());
  s.obstacles.has_ground = true;
  s.obstacles.ground_height = 0.0;
  s.ee_goal_p = Vec3(1.0, 0.0, 0.10);
  s.ee_goal_R = rot_y(110.0 * M_PI / 180.0);
  s.use_orientation_goal = true;
  s.T_f = 10.0;
  s.T_f_pull = 4.0;
  // Pull back along the approach (tool) axis.
  s.pull_offset = -0.2 * (s.ee_goal_R * Vec3::UnitZ());
  s.disturbance.ground_effect.enabled = true;
  s.disturbance.ground_effect.hover_force = cfg.plant.m_bar * cfg.plant.g;
  s.disturbance.ground_effect.ground_height = 0.0;
  s.max_duration = 30.0;
  return s;
}

Scenario table_base(const OamConfig& cfg, bool far) {
  Scenario s;
  s.initial = hover_start(Vec3(0, 0, 0.9), Mat3::Identity());
  s.obstacles.has_ground = true;
  s.obstacles.ground_height = 0.0;
  Ellipsoid table = Ellipsoid::from_semi_axes(Vec3(1.3, 0.0, 0.70),
                                              Vec3(0.6, 0.4, 0.06));
  s.obstacles.ellipsoids.push_back(table);
  if (far) {
    s.ee_goal_p = Vec3(1.3, 0.0, 0.86);
    s.ee_goal_R = rot_y(150.0 * M_PI / 180.0);
  } else {
    s.ee_goal_p = Vec3(0.85, 0.0, 0.86);
    s.ee_goal_R = rot_y(120.0 * M_PI / 180.0);
  }
  s.use_orientation_goal = true;
  s.T_f = 10.0;
  s.T_f_pull = 4.0;
  s.pull_offset = -0.2 * (s.ee_goal_R * Vec3::UnitZ());
  s.disturbance.ground_effect.enabled = true;
  s.disturbance.ground_effect.hover_force = cfg.plant.m_bar * cfg.plant.g;
  s.disturbance.ground_effect.ground_height = 0.0;
  s.disturbance.ground_effect.has_table = true;
  s.disturbance.ground_effect.table_center = Vec3(1.3, 0.0, 0.76);
  s.disturbance.ground_effect.table_half_extent = Vec3(0.6, 0.4, 0.0);
  s.max_duration = 30.0;
  return s;
}

Scenario ctrl_compare(const OamConfig& cfg, double pitch_deg) {
  Scenario s;
  const Mat3 R_d = rot_y(pitch_deg * M_PI / 180.0);
  s.initial = hover_start(Vec3(0, 0, 0.8), R_d);
  s.regulation_only = true;
  s.regulation_setpoint.p_d = Vec3(0, 0, 0.8);
  s.regulation_setpoint.R_d = R_d;
  s.regulation_duration = 20.0;
  s.max_duration = 21.0;
  s.disturbance.arm.enabled = true;
  s.disturbance.arm.R_ref = R_d;
  s.disturbance.arm.mount = cfg.arm.mount_offset;
  s.disturbance.arm.l1 = cfg.arm.link_lengths[0];
  s.disturbance.arm.l2 = cfg.arm.link_lengths[1];
  s.obstacles.has_ground = false;
  return s;
}

}  // namespace

std::vector<std::string> scenario_names() {
  return {"ground-basic", "ground-yaw",  "ground-pitch",   "table-far",
          "table-close",  "ctrl-compare-0", "ctrl-compare-30"};
}

Scenario make_scenario(const std::string& name, const OamConfig& cfg) {
  if (name == "ground-basic") {
    Scenario s = ground_base(cfg);
    s.name = name;
    return s;
  }
  if (name == "ground-yaw") {
    Scenario s = ground_base(cfg);
    s.name = name;
    s.initial.R = rot_z(M_PI);
    return s;
  }
  if (name == "ground-pitch") {
    Scenario s = ground_base(cfg);
    s.name = name;
    s.ee_goal_R = s.ee_goal_R * rot_y(M_PI);  // 180 deg pitched goal
    s.pull_offset = Vec3(-0.1, 0.0, 0.15);
    return s;
  }
  if (name == "table-far") {
    Scenario s = table_base(cfg, true);
    s.name = name;
    return s;
  }
  if (name == "table-close") {
    Scenario s = table_base(cfg, false);
    s.name = name;
    return s;
  }
  if (name == "ctrl-compare-0") {
    Scenario s = ctrl_compare(cfg, 0.0);
    s.name = name;
    return s;
  }
  if (name == "ctrl-compare-30") {
    Scenario s = ctrl_compare(cfg, -30.0);
    s.name = name;
    return s;
  }
  throw std::invalid_argument("unknown scenario: " + name);
}

}  // namespace oam
