#include "oam/controller.hpp"

#include <cmath>

namespace oam {

namespace {

Vec3 tanh_vec(const Vec3& v) {
  return {std::tanh(v.x()), std::tanh(v.y()), std::tanh(v.z())};
}

Vec3 sign_vec(const Vec3& v) {
  auto sgn = [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); };
  return {sgn(v.x()), sgn(v.y()), sgn(v.z())};
}

Vec3 robust_shape_term(const Vec3& Gamma, const Vec3& Theta, const Vec3& e,
                       RobustShape shape) {
  if (shape == RobustShape::Sign) {
    return Gamma.cwiseProduct(sign_vec(e));
  }
  return Gamma.cwiseProduct(tanh_vec(Theta.cwiseProduct(e)));
}

// Overflow-safe ln(cosh(x)).
double log_cosh(double x) {
  const double a = std::abs(x);
  if (a > 20.0) return a - std::log(2.0);
  return std::log(std::cosh(a));
}

void check_positive(const Vec3& v, const char* name) {
  if (!(v.array() > 0.0).all()) {
    throw std::invalid_argument(std::string("gain must be positive: ") + name);
  }
}

}  // namespace

void GainSet::validate() const {
  check_positive(K_tp, "K_tp");
  check_positive(K_td, "K_td");
  check_positive(K_ti, "K_ti");
  check_positive(Lambda_t, "Lambda_t");
  check_positive(Gamma_t, "Gamma_t");
  check_positive(Theta_t, "Theta_t");
  check_positive(K_rp, "K_rp");
  check_positive(K_rd, "K_rd");
  check_positive(K_ri, "K_ri");
  check_positive(Lambda_r, "Lambda_r");
  check_positive(Gamma_r, "Gamma_r");
  check_positive(Theta_r, "Theta_r");
  if (!(rho_t > 0.0) || !(rho_r > 0.0)) {
    throw std::invalid_argument("rho_t, rho_r must be positive");
  }
}

void TranslationalErrorState::reset() { *this = TranslationalErrorState{}; }
void RotationalErrorState::reset() { *this = RotationalErrorState{}; }
void GpidState::reset() { *this = GpidState{}; }

Vec3 grite_force(const RigidBodyState& state, const Setpoint& sp,
                 const GainSet& gains, const PlantParams& params,
                 TranslationalErrorState& err, double dt, RobustShape shape) {
  const Vec3 e_p = sp.p_d - state.p;
  const Vec3 de_p = sp.v_d - state.v;
  const Vec3 e_t1 = de_p + gains.Lambda_t.cwiseProduct(e_p);

  const Vec3 ki_rho = gains.K_ti.array() + gains.rho_t;
  const Vec3 integrand =
      ki_rho.cwiseProduct(e_t1) + robust_shape_term(gains.Gamma_t, gains.Theta_t, e_t1, shape);

  Vec3 de_t1 = Vec3::Zero();
  if (!err.started) {
    err.e_t1_at_start = e_t1;
    err.integral.setZero();
    err.started = true;
  } else {
    err.integral += 0.5 * dt * (err.prev_integrand + integrand);
    de_t1 = (e_t1 - err.prev_e_t1) / dt;
  }

  err.e_p = e_p;
  err.e_t1 = e_t1;
  err.e_t2 = de_t1 + e_t1;
  err.prev_integrand = integrand;
  err.prev_e_t1 = e_t1;

  const Vec3 f_n =
      params.m_bar * (state.R.transpose() *
                      (params.g * Vec3::UnitZ() + gains.K_tp.cwiseProduct(e_p) +
                       gains.K_td.cwiseProduct(de_p) + sp.a_d));
  const Vec3 f_r =
      state.R.transpose() *
      (ki_rho.cwiseProduct(e_t1 - err.e_t1_at_start) + err.integral);
  return f_n + f_r;
}

Vec3 grite_torque(const RigidBodyState& state, const Setpoint& sp,
                  const GainSet& gains, const PlantParams& params,
                  RotationalErrorState& err, double dt, RobustShape shape) {
  const Mat3 Q = state.R.transpose() * sp.R_d;
  const AttitudeError att = attitude_error(state.R, sp.R_d);
  const Vec3 e_R = att.e_R;
  const Vec3 e_omega = Q * sp.omega_d - state.omega;
  const Vec3 e_r1 = e_omega + gains.Lambda_r.cwiseProduct(e_R);

  const Vec3 ki_rho = gains.K_ri.array() + gains.rho_r;
  const Vec3 integrand =
      ki_rho.cwiseProduct(e_r1) + robust_shape_term(gains.Gamma_r, gains.Theta_r, e_r1, shape);

  Vec3 de_r1 = Vec3::Zero();
  if (!err.started) {
    err.e_r1_at_start = e_r1;
    err.integral.setZero();
    err.started = true;
  } else {
    err.integral += 0.5 * dt * (err.prev_integrand + integrand);
    de_r1 = (e_r1 - err.prev_e_r1) / dt;
  }

  err.e_R = e_R;
  err.e_omega = e_omega;
  err.e_r1 = e_r1;
  err.e_r2 = de_r1 + e_r1;
  err.prev_integrand = integrand;
  err.prev_e_r1 = e_r1;

  const Vec3 tau_n =
      state.omega.cross(params.J_bar * state.omega) -
      params.J_bar * (hat(state.omega) * Q * sp.omega_d - Q * sp.omega_dot_d) +
      params.J_bar * gains.K_rp.cwiseProduct(e_R) +
      params.J_bar * gains.K_rd.cwiseProduct(e_omega);
  const Vec3 tau_r =
      ki_rho.cwiseProduct(e_r1 - err.e_r1_at_start) + err.integral;
  return tau_n + tau_r;
}

Vec3 grise_force(const RigidBodyState& state, const Setpoint& sp,
                 const GainSet& gains, const PlantParams& params,
                 TranslationalErrorState& err, double dt) {
  return grite_force(state, sp, gains, params, err, dt, RobustShape::Sign);
}

Vec3 grise_torque(const RigidBodyState& state, const Setpoint& sp,
                  const GainSet& gains, const PlantParams& params,
                  RotationalErrorState& err, double dt) {
  return grite_torque(state, sp, gains, params, err, dt, RobustShape::Sign);
}

Vec3 gpid_force(const RigidBodyState& state, const Setpoint& sp,
                const GainSet& gains, const PlantParams& params,
                GpidState& st, double dt) {
  const Vec3 e_p = sp.p_d - state.p;
  const Vec3 de_p = sp.v_d - state.v;

  if (!st.started) {
    st.integral_p.setZero();
    st.integral_R.setZero();
    st.started = true;
  } else {
    st.integral_p += 0.5 * dt * (st.prev_e_p + e_p);
  }
  st.prev_e_p = e_p;

  // Anti-windup: keep the integral force contribution within +-2 m_bar g.
  const double clamp_f = 2.0 * params.m_bar * params.g;
  for (int i = 0; i < 3; ++i) {
    const double lim = clamp_f / gains.K_ti(i);
    st.integral_p(i) = std::clamp(st.integral_p(i), -lim, lim);
  }

  const Vec3 f_n =
      params.m_bar * (state.R.transpose() *
                      (params.g * Vec3::UnitZ() + gains.K_tp.cwiseProduct(e_p) +
                       gains.K_td.cwiseProduct(de_p) + sp.a_d));
  return f_n + state.R.transpose() * gains.K_ti.cwiseProduct(st.integral_p);
}

Vec3 gpid_torque(const RigidBodyState& state, const Setpoint& sp,
                 const GainSet& gains, const PlantParams& params,
                 GpidState& st, double dt) {
  const Mat3 Q = state.R.transpose() * sp.R_d;
  const AttitudeError att = attitude_error(state.R, sp.R_d);
  const Vec3 e_omega = Q * sp.omega_d - state.omega;

  if (st.started) {
    st.integral_R += 0.5 * dt * (st.prev_e_R + att.e_R);
  }
  st.prev_e_R = att.e_R;

  const double clamp_tau = 1.0;  // N*m
  for (int i = 0; i < 3; ++i) {
    const double lim = clamp_tau / gains.K_ri(i);
    st.integral_R(i) = std::clamp(st.integral_R(i), -lim, lim);
  }

  const Vec3 tau_n =
      state.omega.cross(params.J_bar * state.omega) -
      params.J_bar * (hat(state.omega) * Q * sp.omega_d - Q * sp.omega_dot_d) +
      params.J_bar * gains.K_rp.cwiseProduct(att.e_R) +
      params.J_bar * gains.K_rd.cwiseProduct(e_omega);
  return tau_n + gains.K_ri.cwiseProduct(st.integral_R);
}

LyapunovTerms lyapunov_translational(const TranslationalErrorState& err,
                                     const PlantParams& params,
                                     const GainSet& gains, const Vec3& N_td) {
  LyapunovTerms out;
  double Q_t = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double ratio = gains.Gamma_t(i) / gains.Theta_t(i);
    Q_t += ratio * log_cosh(gains.Theta_t(i) * err.e_t1(i)) -
           err.e_t1(i) * N_td(i) + ratio * std::log(2.0);
  }
  out.Q = Q_t;
  out.V = 0.5 * err.e_p.squaredNorm() + 0.5 * err.e_t1.squaredNorm() +
          0.5 * params.m * err.e_t2.squaredNorm() + Q_t;
  return out;
}

LyapunovTerms lyapunov_rotational(const RotationalErrorState& err,
                                  const Mat3& R, const Mat3& R_d,
                                  const PlantParams& params,
                                  const GainSet& gains, const Vec3& N_rd) {
  LyapunovTerms out;
  double Q_r = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double ratio = gains.Gamma_r(i) / gains.Theta_r(i);
    Q_r += ratio * log_cosh(gains.Theta_r(i) * err.e_r1(i)) -
           err.e_r1(i) * N_rd(i) + ratio * std::log(2.0);
  }
  out.Q = Q_r;
  out.psi = attitude_error(R, R_d).psi;
  out.V = 0.5 * err.e_r1.squaredNorm() +
          0.5 * err.e_r2.dot(params.J_b * err.e_r2) + Q_r + out.psi;
  return out;
}

bool certify_gain_condition(const Vec3& Gamma, const Vec3& N_d_inf,
                            const Vec3& N_d_dot_inf) {
  return (Gamma.array() >= (N_d_inf + N_d_dot_inf).array()).all();
}

ControllerType controller_type_from_string(const std::string& s) {
  if (s == "grite") return ControllerType::Grite;
  if (s == "gpid") return ControllerType::Gpid;
  if (s == "grise") return ControllerType::Grise;
  throw std::invalid_argument("unknown controller: " + s);
}

std::string to_string(ControllerType t) {
  switch (t) {
    case ControllerType::Grite: return "grite";
    case ControllerType::Gpid: return "gpid";
    case ControllerType::Grise: return "grise";
  }
  return "?";
}

PoseController::PoseController(ControllerType type, GainSet gains,
                               PlantParams params)
    : type_(type), gains_(std::move(gains)), params_(std::move(params)) {
  gains_.validate();
  params_.validate();
}

Wrench PoseController::step(const RigidBodyState& state, const Setpoint& sp,
                            double dt) {
  Wrench w;
  switch (type_) {
    case ControllerType::Grite:
      w.force = grite_force(state, sp, gains_, params_, trans_, dt);
      w.torque = grite_torque(state, sp, gains_, params_, rot_, dt);
      break;
    case ControllerType::Grise:
      w.force = grise_force(state, sp, gains_, params_, trans_, dt);
      w.torque = grise_torque(state, sp, gains_, params_, rot_, dt);
      break;
    case ControllerType::Gpid:
      w.force = gpid_force(state, sp, gains_, params_, gpid_, dt);
      w.torque = gpid_torque(state, sp, gains_, params_, gpid_, dt);
      break;
  }
  return w;
}

void PoseController::reset() {
  trans_.reset();
  rot_.reset();
  gpid_.reset();
}

}  // namespace oam
