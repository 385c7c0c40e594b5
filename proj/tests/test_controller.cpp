#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "oam/controller.hpp"

using namespace oam;

namespace {

Mat3 rot_z(double a) { return exp_so3(Vec3(0, 0, a)); }

RigidBodyState hover_state(const Mat3& R = Mat3::Identity()) {
  RigidBodyState s;
  s.p = Vec3(0, 0, 1);
  s.R = R;
  return s;
}

Setpoint hover_setpoint(const RigidBodyState& s) {
  Setpoint sp;
  sp.p_d = s.p;
  sp.R_d = s.R;
  return sp;
}

}  // namespace

TEST_CASE("grite force: zero-error hover is gravity feedforward only") {
  GainSet gains;
  PlantParams params;
  TranslationalErrorState err;
  const RigidBodyState s = hover_state();
  const Vec3 f = grite_force(s, hover_setpoint(s), gains, params, err, 0.002);
  CHECK((f - Vec3(0, 0, 2.13 * 9.81)).norm() < 1e-12);
  CHECK(f.z() == doctest::Approx(20.8953));
}

TEST_CASE("grite force: b3 invariant under yaw") {
  GainSet gains;
  PlantParams params;
  TranslationalErrorState err;
  const RigidBodyState s = hover_state(rot_z(M_PI / 2));
  const Vec3 f = grite_force(s, hover_setpoint(s), gains, params, err, 0.002);
  CHECK((f - Vec3(0, 0, 20.8953)).norm() < 1e-4);
}

TEST_CASE("grite force: robust term integrates a held error") {
  GainSet gains;
  PlantParams params;
  TranslationalErrorState err;
  const double dt = 0.002, T = 2.0;
  const double eps = 0.01;

  RigidBodyState s = hover_state();
  Setpoint sp = hover_setpoint(s);
  // First update with zero error latches e_t1(0) = 0.
  grite_force(s, sp, gains, params, err, dt);
  // Then hold e_t1 = (eps, 0, 0) via a velocity offset.
  sp.v_d = Vec3(eps, 0, 0);
  const int steps = static_cast<int>(std::lround(T / dt));
  Vec3 f;
  for (int i = 0; i < steps; ++i) f = grite_force(s, sp, gains, params, err, dt);

  const double ki_rho = gains.K_ti(0) + gains.rho_t;
  const double integrand =
      ki_rho * eps + gains.Gamma_t(0) * std::tanh(gains.Theta_t(0) * eps);
  // The velocity offset also feeds the nominal K_td term.
  const double nominal = params.m_bar * gains.K_td(0) * eps;
  // Trapezoidal integral of a step: half an interval is lost at the jump.
  const double expected = nominal + ki_rho * eps + (T - 0.5 * dt) * integrand;
  CHECK(f.x() == doctest::Approx(expected).epsilon(1e-9));
  // and the closed-form continuous value is approached within one slice
  CHECK(std::abs(f.x() - (nominal + ki_rho * eps + T * integrand)) <
        integrand * dt);
}

TEST_CASE("grite torque: equilibrium and hover spin") {
  GainSet gains;
  PlantParams params;

  SUBCASE("zero errors at start give zero torque") {
    RotationalErrorState err;
    RigidBodyState s = hover_state(exp_so3(Vec3(0.2, -0.1, 0.3)));
    Setpoint sp = hover_setpoint(s);
    const Vec3 tau = grite_torque(s, sp, gains, params, err, 0.002);
    CHECK(tau.norm() < 1e-12);
  }

  SUBCASE("matched z-spin cancels the gyroscopic feedforward") {
    RotationalErrorState err;
    RigidBodyState s = hover_state();
    s.omega = Vec3(0, 0, 1);
    Setpoint sp = hover_setpoint(s);
    sp.omega_d = Vec3(0, 0, 1);  // R = R_d so e_omega = 0
    const Vec3 tau = grite_torque(s, sp, gains, params, err, 0.002);
    // omega^ J omega = 0 for a diagonal J and z-axis spin
    CHECK(tau.norm() < 1e-12);
  }
}

TEST_CASE("tanh sharpness limit approaches the sign law") {
  GainSet gains;
  PlantParams params;
  gains.Theta_r = Vec3(1e9, 1e9, 1e9);

  RigidBodyState s = hover_state();
  Setpoint sp = hover_setpoint(s);
  // Build e_r1 = (0.1, -0.2, 0) through an angular velocity error.
  s.omega = Vec3(-0.1, 0.2, 0);

  RotationalErrorState err_tanh, err_sign;
  const Vec3 tau_sharp =
      grite_torque(s, sp, gains, params, err_tanh, 0.002, RobustShape::Tanh);
  const Vec3 tau_sign = grise_torque(s, sp, gains, params, err_sign, 0.002);
  CHECK((tau_sharp - tau_sign).norm() < 1e-9);
}

TEST_CASE("grise equals grite-with-sign bit for bit along a trajectory") {
  GainSet gains;
  PlantParams params;
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(-0.3, 0.3);

  TranslationalErrorState e1, e2;
  RotationalErrorState r1, r2;
  for (int i = 0; i < 200; ++i) {
    RigidBodyState s = hover_state(exp_so3(Vec3(u(rng), u(rng), u(rng))));
    s.p += Vec3(u(rng), u(rng), u(rng));
    s.v = Vec3(u(rng), u(rng), u(rng));
    s.omega = Vec3(u(rng), u(rng), u(rng));
    Setpoint sp;
    sp.p_d = Vec3(0, 0, 1);
    sp.R_d = Mat3::Identity();
    const Vec3 fa = grite_force(s, sp, gains, params, e1, 0.002, RobustShape::Sign);
    const Vec3 fb = grise_force(s, sp, gains, params, e2, 0.002);
    const Vec3 ta = grite_torque(s, sp, gains, params, r1, 0.002, RobustShape::Sign);
    const Vec3 tb = grise_torque(s, sp, gains, params, r2, 0.002);
    CHECK(fa == fb);  // bitwise
    CHECK(ta == tb);
  }
}

TEST_CASE("grise sign convention: sign(0) = 0") {
  GainSet gains;
  PlantParams params;
  RotationalErrorState err;
  RigidBodyState s = hover_state();
  // e_r1 = (0.1, -0.2, 0): z component contributes nothing to the integrand.
  s.omega = Vec3(-0.1, 0.2, 0.0);
  Setpoint sp = hover_setpoint(s);
  grise_torque(s, sp, gains, params, err, 0.002);
  CHECK(err.prev_integrand(2) == 0.0);
  CHECK(err.prev_integrand(0) ==
        doctest::Approx((gains.K_ri(0) + gains.rho_r) * 0.1 + gains.Gamma_r(0)));
}

TEST_CASE("grise-vs-grite gap bounded by the tanh saturation deficit") {
  GainSet gains;
  PlantParams params;
  const double dt = 0.002, T = 1.0;

  TranslationalErrorState et, es;
  RigidBodyState s = hover_state();
  Setpoint sp = hover_setpoint(s);
  sp.v_d = Vec3(0.1, -0.2, 0.0);  // constant e_t1

  Vec3 f_tanh, f_sign;
  double max_deficit = 0.0;
  const int steps = static_cast<int>(T / dt);
  for (int i = 0; i < steps; ++i) {
    f_tanh = grite_force(s, sp, gains, params, et, dt);
    f_sign = grise_force(s, sp, gains, params, es, dt);
    for (int ax = 0; ax < 3; ++ax) {
      const double e = std::abs(et.e_t1(ax));
      if (e > 0) {
        max_deficit = std::max(
            max_deficit, 1.0 - std::tanh(gains.Theta_t(ax) * e));
      }
    }
  }
  const double bound = gains.Gamma_t.maxCoeff() * T * max_deficit + 1e-9;
  for (int ax = 0; ax < 3; ++ax) {
    CHECK(std::abs(f_sign(ax) - f_tanh(ax)) <= bound);
  }
}

TEST_CASE("gpid: integral term and anti-windup") {
  GainSet gains;
  PlantParams params;
  GpidState st;
  const double dt = 0.002;

  RigidBodyState s = hover_state();
  Setpoint sp = hover_setpoint(s);

  SUBCASE("zero error history equals the nominal law") {
    const Vec3 f = gpid_force(s, sp, gains, params, st, dt);
    CHECK((f - Vec3(0, 0, params.m_bar * params.g)).norm() < 1e-12);
  }

  SUBCASE("constant error integrates linearly before the clamp") {
    sp.p_d = s.p + Vec3(0.01, 0, 0);
    const double T = 2.0;
    Vec3 f;
    for (int i = 0; i < static_cast<int>(T / dt); ++i) {
      f = gpid_force(s, sp, gains, params, st, dt);
    }
    // Trapezoid over T/dt samples of a constant spans T - dt.
    const double expected = gains.K_ti(0) * 0.01 * (T - dt);
    const double nominal = params.m_bar * gains.K_tp(0) * 0.01;
    CHECK(f.x() == doctest::Approx(nominal + expected).epsilon(1e-9));
  }

  SUBCASE("accumulator clamps at two hover weights") {
    sp.p_d = s.p + Vec3(10.0, 0, 0);
    for (int i = 0; i < 200000; ++i) {
      gpid_force(s, sp, gains, params, st, dt);
    }
    CHECK(gains.K_ti(0) * st.integral_p(0) ==
          doctest::Approx(2.0 * params.m_bar * params.g));
    const Vec3 before = st.integral_p;
    gpid_force(s, sp, gains, params, st, dt);
    CHECK(st.integral_p(0) == before(0));  // growth suppressed
  }

  SUBCASE("torque integral clamps at 1 Nm") {
    RigidBodyState sr = hover_state(rot_z(1.0));
    Setpoint spr;
    spr.p_d = sr.p;
    spr.R_d = Mat3::Identity();
    for (int i = 0; i < 500000; ++i) {
      gpid_torque(sr, spr, gains, params, st, dt);
    }
    CHECK(std::abs(gains.K_ri(2) * st.integral_R(2)) <= 1.0 + 1e-9);
  }
}

TEST_CASE("lyapunov translational") {
  GainSet gains;
  PlantParams params;

  SUBCASE("zero errors, zero N gives the ln2 offset") {
    TranslationalErrorState err;
    const LyapunovTerms t =
        lyapunov_translational(err, params, gains, Vec3::Zero());
    double expected = 0.0;
    for (int i = 0; i < 3; ++i) {
      expected += gains.Gamma_t(i) / gains.Theta_t(i) * std::log(2.0);
    }
    CHECK(t.V == doctest::Approx(expected));
    CHECK(t.Q == doctest::Approx(expected));
  }

  SUBCASE("Q_t sandwich at e_t1 = (1,0,0)") {
    GainSet g2 = gains;
    g2.Gamma_t = Vec3(2, 2, 2);
    g2.Theta_t = Vec3(3, 3, 3);
    TranslationalErrorState err;
    err.e_t1 = Vec3(1, 0, 0);
    const double n_inf = 0.5;
    const double ln2_sum = 3.0 * (2.0 / 3.0) * std::log(2.0);
    for (double n : {-0.5, 0.5}) {
      const LyapunovTerms t =
          lyapunov_translational(err, params, g2, Vec3(n, 0, 0));
      const double lower = (2.0 - n_inf) * 1.0;
      const double upper = (2.0 + n_inf) * 1.0 + ln2_sum;
      CHECK(t.Q >= lower - 1e-12);
      CHECK(t.Q <= upper + 1e-12);
    }
  }
}

TEST_CASE("scalar tanh bound from the robust-integral lemma") {
  // max over x of |x| - x tanh(x) stays below 0.2785; grid search at 1e-4.
  double best = 0.0;
  double best_x = 0.0;
  for (double x = 0.0; x <= 5.0; x += 1e-4) {
    const double v = std::abs(x) - x * std::tanh(x);
    if (v > best) {
      best = v;
      best_x = x;
    }
  }
  CHECK(best <= 0.2785);
  CHECK(best > 0.278);  // the bound is tight
  CHECK(best_x > 0.5);
  CHECK(best_x < 0.8);
}

TEST_CASE("lyapunov rotational") {
  GainSet gains;
  PlantParams params;

  SUBCASE("zero state is the ln2 offset") {
    RotationalErrorState err;
    const LyapunovTerms t = lyapunov_rotational(
        err, Mat3::Identity(), Mat3::Identity(), params, gains, Vec3::Zero());
    double expected = 0.0;
    for (int i = 0; i < 3; ++i) {
      expected += gains.Gamma_r(i) / gains.Theta_r(i) * std::log(2.0);
    }
    CHECK(t.V == doctest::Approx(expected));
    CHECK(t.psi == doctest::Approx(0.0));
  }

  SUBCASE("psi value and sandwich for z rotations") {
    RotationalErrorState err;
    const LyapunovTerms t = lyapunov_rotational(
        err, Mat3::Identity(), rot_z(M_PI / 3), params, gains, Vec3::Zero());
    CHECK(t.psi == doctest::Approx(0.5));

    for (double a = 0.05; a < M_PI; a += 0.05) {
      const AttitudeError e = attitude_error(Mat3::Identity(), rot_z(a));
      const double psi = e.psi;
      CHECK(0.5 * e.e_R.squaredNorm() <= psi + 1e-12);
      const double upper = 1.0 / (2.0 - psi) * e.e_R.squaredNorm();
      CHECK(psi <= upper + 1e-9);
    }
  }
}

TEST_CASE("control output is Lipschitz in the error for fixed accumulators") {
  GainSet gains;
  PlantParams params;
  const double dt = 0.002;

  RigidBodyState s = hover_state();
  Setpoint sp = hover_setpoint(s);

  // Warm up the accumulator, then copy the state for both probes.
  TranslationalErrorState base;
  grite_force(s, sp, gains, params, base, dt);

  const double de = 1e-4;
  Setpoint sp1 = sp, sp2 = sp;
  sp2.v_d = Vec3(de, 0, 0);  // perturbs e_t1 by de
  TranslationalErrorState e1 = base, e2 = base;
  const Vec3 f1 = grite_force(s, sp1, gains, params, e1, dt);
  const Vec3 f2 = grite_force(s, sp2, gains, params, e2, dt);

  const double slope = (f2 - f1).norm() / de;
  // Direct term (K_ti + rho) + K_td feedforward + one trapezoid slice.
  const double bound = (gains.K_ti(0) + gains.rho_t) +
                       params.m_bar * gains.K_td(0) +
                       0.5 * dt *
                           ((gains.K_ti(0) + gains.rho_t) +
                            gains.Gamma_t(0) * gains.Theta_t(0));
  CHECK(slope <= bound * (1.0 + 1e-9));
}

TEST_CASE("reset reproduces time-zero behavior exactly") {
  GainSet gains;
  PlantParams params;
  PoseController ctrl(ControllerType::Grite, gains, params);

  RigidBodyState s = hover_state();
  Setpoint sp = hover_setpoint(s);
  sp.p_d += Vec3(0.1, 0, 0);

  std::vector<Vec3> first;
  for (int i = 0; i < 50; ++i) first.push_back(ctrl.step(s, sp, 0.002).force);
  ctrl.reset();
  for (int i = 0; i < 50; ++i) {
    const Vec3 f = ctrl.step(s, sp, 0.002).force;
    CHECK(f == first[i]);  // bitwise reproduction
  }
}

TEST_CASE("gain validation") {
  GainSet gains;
  CHECK_NOTHROW(gains.validate());
  gains.Theta_r(1) = 0.0;
  CHECK_THROWS(gains.validate());
  GainSet g2;
  g2.rho_t = -1.0;
  CHECK_THROWS(g2.validate());
}

TEST_CASE("gain condition certification helper") {
  CHECK(certify_gain_condition(Vec3(2, 2, 2), Vec3(0.5, 0.5, 0.5),
                               Vec3(1.0, 1.0, 1.0)));
  CHECK_FALSE(certify_gain_condition(Vec3(2, 2, 2), Vec3(1.5, 0.5, 0.5),
                                     Vec3(1.0, 1.0, 1.0)));
}
