#include <cmath>
#include <fstream>

#include <json.hpp>

#include "oam/sim.hpp"

namespace oam {

namespace {

// Planar two-link chain pitching about body y, links along +z at home.
Vec3 chain_dir(double psi) { return {std::sin(psi), 0.0, std::cos(psi)}; }
Vec3 chain_dir_d(double psi) { return {std::cos(psi), 0.0, -std::sin(psi)}; }

double smoothstep01(double u) {
  u = std::clamp(u, 0.0, 1.0);
  return u * u * (3.0 - 2.0 * u);
}

}  // namespace

bool DisturbanceModel::sweep_targets(double t, Vec3* theta_d,
                                     Vec3* theta_dot_d) const {
  if (!arm.enabled) return false;
  const double Om = 2.0 * M_PI / arm.period;
  const double q = arm.amplitude * std::sin(Om * t);
  const double qd = arm.amplitude * Om * std::cos(Om * t);
  if (theta_d) *theta_d = Vec3(q, q, 0.0);
  if (theta_dot_d) *theta_dot_d = Vec3(qd, qd, 0.0);
  return true;
}

Vec3 DisturbanceModel::scripted_d_t(double t) const {
  Vec3 out = Vec3::Zero();
  if (arm.enabled) {
    const double Om = 2.0 * M_PI / arm.period;
    const double q = arm.amplitude * std::sin(Om * t);
    const double qd = arm.amplitude * Om * std::cos(Om * t);
    const double qdd = -arm.amplitude * Om * Om * std::sin(Om * t);
    const double p1 = q, p1d = qd, p1dd = qdd;
    const double p2 = 2 * q, p2d = 2 * qd, p2dd = 2 * qdd;

    const Vec3 r1dd =
        0.5 * arm.l1 * (-chain_dir(p1) * p1d * p1d + chain_dir_d(p1) * p1dd);
    const Vec3 r2dd =
        arm.l1 * (-chain_dir(p1) * p1d * p1d + chain_dir_d(p1) * p1dd) +
        0.5 * arm.l2 * (-chain_dir(p2) * p2d * p2d + chain_dir_d(p2) * p2dd);
    out += -arm.R_ref * (arm.m1 * r1dd + arm.m2 * r2dd);
  }
  if (sinusoid.enabled) {
    out += sinusoid.force_amp * std::sin(sinusoid.freq * t);
  }
  if (constant.enabled) {
    out += smoothstep01((t - constant.t_on) / constant.ramp) * constant.force;
  }
  return out;
}

Vec3 DisturbanceModel::scripted_d_r(double t) const {
  Vec3 out = Vec3::Zero();
  if (arm.enabled) {
    const double Om = 2.0 * M_PI / arm.period;
    const double q = arm.amplitude * std::sin(Om * t);
    const double qd = arm.amplitude * Om * std::cos(Om * t);
    const double qdd = -arm.amplitude * Om * Om * std::sin(Om * t);
    const double p1 = q, p1d = qd, p1dd = qdd;
    const double p2 = 2 * q, p2d = 2 * qd, p2dd = 2 * qdd;

    const Vec3 r1 = arm.mount + 0.5 * arm.l1 * chain_dir(p1);
    const Vec3 r2 =
        arm.mount + arm.l1 * chain_dir(p1) + 0.5 * arm.l2 * chain_dir(p2);
    const Vec3 r1dd =
        0.5 * arm.l1 * (-chain_dir(p1) * p1d * p1d + chain_dir_d(p1) * p1dd);
    const Vec3 r2dd =
        arm.l1 * (-chain_dir(p1) * p1d * p1d + chain_dir_d(p1) * p1dd) +
        0.5 * arm.l2 * (-chain_dir(p2) * p2d * p2d + chain_dir_d(p2) * p2dd);

    const Vec3 g_body = arm.R_ref.transpose() * Vec3(0, 0, -arm.g);
    out += -(arm.m1 * r1.cross(r1dd) + arm.m2 * r2.cross(r2dd));
    out += r1.cross(arm.m1 * g_body) + r2.cross(arm.m2 * g_body);
  }
  if (sinusoid.enabled) {
    out += sinusoid.torque_amp * std::sin(sinusoid.freq * t);
  }
  if (constant.enabled) {
    out += smoothstep01((t - constant.t_on) / constant.ramp) * constant.torque;
  }
  return out;
}

Vec3 DisturbanceModel::d_t(double t, const RigidBodyState& state) const {
  Vec3 out = scripted_d_t(t);
  if (ground_effect.enabled) {
    double surface = ground_effect.ground_height;
    double lateral = 1.0;
    if (ground_effect.has_table) {
      const Vec3 d = state.p - ground_effect.table_center;
      const double ox = std::max(0.0, std::abs(d.x()) - ground_effect.table_half_extent.x());
      const double oy = std::max(0.0, std::abs(d.y()) - ground_effect.table_half_extent.y());
      const double falloff = std::exp(-(ox * ox + oy * oy) / (2 * 0.1 * 0.1));
      if (state.p.z() > ground_effect.table_center.z() && falloff > 1e-6) {
        surface = std::max(surface, ground_effect.table_center.z());
        lateral = falloff;
      }
    }
    const double clearance = std::max(0.0, state.p.z() - surface);
    out += lateral * ground_effect.gain * ground_effect.hover_force *
           std::exp(-clearance / ground_effect.length_scale) * Vec3::UnitZ();
  }
  return out;
}

Vec3 DisturbanceModel::d_r(double t, const RigidBodyState& state) const {
  (void)state;
  return scripted_d_r(t);
}

Vec3 DisturbanceModel::d_t_dot(double t) const {
  const double h = 1e-5;
  return (scripted_d_t(t + h) - scripted_d_t(t - h)) / (2 * h);
}

Vec3 DisturbanceModel::d_r_dot(double t) const {
  const double h = 1e-5;
  return (scripted_d_r(t + h) - scripted_d_r(t - h)) / (2 * h);
}

void DisturbanceModel::derivative_bounds(double horizon, Vec3* dt_dot_inf,
                                         Vec3* dt_ddot_inf, Vec3* dr_dot_inf,
                                         Vec3* dr_ddot_inf) const {
  const double h = 1e-3;
  Vec3 a = Vec3::Zero(), b = Vec3::Zero(), c = Vec3::Zero(), d = Vec3::Zero();
  for (double t = h; t < horizon - h; t += h) {
    const Vec3 ft0 = scripted_d_t(t - h), ft1 = scripted_d_t(t), ft2 = scripted_d_t(t + h);
    const Vec3 fr0 = scripted_d_r(t - h), fr1 = scripted_d_r(t), fr2 = scripted_d_r(t + h);
    a = a.cwiseMax(((ft2 - ft0) / (2 * h)).cwiseAbs());
    b = b.cwiseMax(((ft2 - 2 * ft1 + ft0) / (h * h)).cwiseAbs());
    c = c.cwiseMax(((fr2 - fr0) / (2 * h)).cwiseAbs());
    d = d.cwiseMax(((fr2 - 2 * fr1 + fr0) / (h * h)).cwiseAbs());
  }
  if (dt_dot_inf) *dt_dot_inf = a;
  if (dt_ddot_inf) *dt_ddot_inf = b;
  if (dr_dot_inf) *dr_dot_inf = c;
  if (dr_ddot_inf) *dr_ddot_inf = d;
}

PlantStepResult plant_step(const RigidBodyState& state, ActuatorState& act,
                           const ActuatorCommand& cmd, const Vec3& theta_cmd,
                           const Vec3& theta_dot_cmd,
                           const DisturbanceModel& dist,
                           const PlantParams& params,
                           const AllocationConfig& alloc,
                           const PlantOptions& opts, double t, double dt) {
  if (!act.initialized) {
    act.thrust = cmd.thrust;
    act.tilt = cmd.tilt;
    act.initialized = true;
  }
  if (!opts.actuator_lags) {
    act.thrust = cmd.thrust;
    act.tilt = cmd.tilt;
  }

  const Mat6x12 A = allocation_matrix(alloc);
  const Mat3 J = params.J_b;
  const Mat3 J_inv = J.inverse();

  // State vector: [p v sigma omega theta theta_dot F alpha].
  const int nth = static_cast<int>(state.theta.size());
  const int n = 24 + 2 * nth;
  VecX y(n);
  y.segment<3>(0) = state.p;
  y.segment<3>(3) = state.v;
  y.segment<3>(6).setZero();  // sigma
  y.segment<3>(9) = state.omega;
  y.segment(12, nth) = state.theta;
  y.segment(12 + nth, nth) = state.theta_dot;
  y.segment<6>(12 + 2 * nth) = act.thrust;
  y.segment<6>(18 + 2 * nth) = act.tilt;

  const Mat3 R0 = state.R;
  const double wn = opts.joint_omega_n;

  auto deriv = [&](double time, const VecX& yy) {
    VecX dy(n);
    const Vec3 sigma = yy.segment<3>(6);
    const Mat3 R = R0 * exp_so3(sigma);
    const Vec3 omega = yy.segment<3>(9);
    ActuatorCommand realized;
    realized.thrust = yy.segment<6>(12 + 2 * nth);
    realized.tilt = yy.segment<6>(18 + 2 * nth);
    const Vec6 wrench = A * actuator_b_vector(realized);

    RigidBodyState probe;
    probe.p = yy.segment<3>(0);
    probe.v = yy.segment<3>(3);
    probe.R = R;
    probe.omega = omega;

    dy.segment<3>(0) = yy.segment<3>(3);
    dy.segment<3>(3) = (R * wrench.head<3>() - params.m * params.g * Vec3::UnitZ() +
                        dist.d_t(time, probe)) /
                       params.m;
    dy.segment<3>(6) = so3_right_jacobian_inverse(sigma) * omega;
    dy.segment<3>(9) =
        J_inv * (wrench.tail<3>() + dist.d_r(time, probe) - omega.cross(J * omega));
    dy.segment(12, nth) = yy.segment(12 + nth, nth);
    for (int i = 0; i < nth; ++i) {
      const double td = i < 3 ? theta_cmd(i) : 0.0;
      const double tdd = i < 3 ? theta_dot_cmd(i) : 0.0;
      dy(12 + nth + i) = wn * wn * (td - yy(12 + i)) + 2.0 * wn * (tdd - yy(12 + nth + i));
    }
    if (opts.actuator_lags) {
      dy.segment<6>(12 + 2 * nth) = (cmd.thrust - realized.thrust) / opts.tau_rotor;
      dy.segment<6>(18 + 2 * nth) = (cmd.tilt - realized.tilt) / opts.tau_servo;
    } else {
      dy.segment<6>(12 + 2 * nth).setZero();
      dy.segment<6>(18 + 2 * nth).setZero();
    }
    return dy;
  };

  const VecX k1 = deriv(t, y);
  const VecX k2 = deriv(t + dt / 2, y + dt / 2 * k1);
  const VecX k3 = deriv(t + dt / 2, y + dt / 2 * k2);
  const VecX k4 = deriv(t + dt, y + dt * k3);
  y += dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);

  PlantStepResult out;
  out.state = state;
  out.state.p = y.segment<3>(0);
  out.state.v = y.segment<3>(3);
  out.state.R = R0 * exp_so3(y.segment<3>(6));
  if (orthonormality_error(out.state.R) > 1e-9) {
    out.state.R = project_to_so3(out.state.R);
  }
  out.state.omega = y.segment<3>(9);
  out.state.theta = y.segment(12, nth);
  out.state.theta_dot = y.segment(12 + nth, nth);
  act.thrust = y.segment<6>(12 + 2 * nth);
  act.tilt = y.segment<6>(18 + 2 * nth);

  if (!out.state.finite()) {
    throw NonFiniteState("plant state diverged at t=" + std::to_string(t));
  }

  const Vec6 wrench = A * actuator_b_vector({act.thrust, act.tilt});
  out.realized.force = wrench.head<3>();
  out.realized.torque = wrench.tail<3>();
  return out;
}

RunMetrics compute_metrics(const std::vector<TelemetryRow>& rows) {
  if (rows.empty()) throw EmptyTelemetry("no telemetry rows");
  RunMetrics m;
  double sum_p = 0, sum_p2 = 0, sum_a = 0, sum_a2 = 0;
  for (const auto& r : rows) {
    const double ep = r.e_p.norm() * 100.0;  // cm
    const double ea = r.d_g * 180.0 / M_PI;  // deg
    sum_p += ep;
    sum_p2 += ep * ep;
    sum_a += ea;
    sum_a2 += ea * ea;
  }
  const double n = static_cast<double>(rows.size());
  m.pos_rms_cm = std::sqrt(sum_p2 / n);
  m.pos_mean_cm = sum_p / n;
  m.pos_std_cm = std::sqrt(std::max(0.0, sum_p2 / n - m.pos_mean_cm * m.pos_mean_cm));
  m.ang_rms_deg = std::sqrt(sum_a2 / n);
  m.ang_mean_deg = sum_a / n;
  m.ang_std_deg = std::sqrt(std::max(0.0, sum_a2 / n - m.ang_mean_deg * m.ang_mean_deg));
  return m;
}

void write_telemetry_csv(const std::string& path,
                         const std::vector<TelemetryRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "t,p_x,p_y,p_z,q_w,q_x,q_y,q_z,e_p_x,e_p_y,e_p_z,d_g,"
         "f_x,f_y,f_z,tau_x,tau_y,tau_z,"
         "F_1,F_2,F_3,F_4,F_5,F_6,alpha_1,alpha_2,alpha_3,alpha_4,alpha_5,alpha_6,"
         "V_t,V_r\n";
  out.precision(12);
  for (const auto& r : rows) {
    out << r.t;
    for (int i = 0; i < 3; ++i) out << ',' << r.p(i);
    for (int i = 0; i < 4; ++i) out << ',' << r.q(i);
    for (int i = 0; i < 3; ++i) out << ',' << r.e_p(i);
    out << ',' << r.d_g;
    for (int i = 0; i < 3; ++i) out << ',' << r.f(i);
    for (int i = 0; i < 3; ++i) out << ',' << r.tau(i);
    for (int i = 0; i < 6; ++i) out << ',' << r.thrust(i);
    for (int i = 0; i < 6; ++i) out << ',' << r.tilt(i);
    out << ',' << r.V_t << ',' << r.V_r << '\n';
  }
}

std::string metrics_to_json(const RunMetrics& m) {
  nlohmann::json j;
  j["position_error_cm"] = {{"rms", m.pos_rms_cm}, {"mean", m.pos_mean_cm},
                            {"std", m.pos_std_cm}};
  j["orientation_error_deg"] = {{"rms", m.ang_rms_deg}, {"mean", m.ang_mean_deg},
                                {"std", m.ang_std_deg}};
  j["nmpc_ms"] = {{"min", m.nmpc_ms_min}, {"max", m.nmpc_ms_max},
                  {"mean", m.nmpc_ms_mean}, {"solves", m.nmpc_solves}};
  j["min_certificate"] =
      std::isfinite(m.min_certificate) ? m.min_certificate : 1e30;
  j["grasp"] = {{"fired", m.grasp_fired}, {"time", m.grasp_time}};
  j["pull_completed"] = m.pull_completed;
  j["max_tilt_deg"] = m.max_tilt_deg;
  j["max_orthonormality"] = m.max_orthonormality;
  j["status"] = m.status;
  return j.dump(2);
}

}  // namespace oam
