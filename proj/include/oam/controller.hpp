#ifndef OAM_CONTROLLER_HPP_
#define OAM_CONTROLLER_HPP_

#include "oam/geometry.hpp"
#include "oam/robot_model.hpp"
#include "oam/state.hpp"

namespace oam {

// All diagonal gains are stored as their diagonal entries. Defaults follow
// the tuning used for the hardware-scale vehicle.
struct GainSet {
  Vec3 K_tp = Vec3(8, 8, 8);
  Vec3 K_td = Vec3(5, 5, 5);
  Vec3 K_ti = Vec3(2, 2, 4);
  Vec3 Lambda_t = Vec3(3, 2, 2);
  Vec3 Gamma_t = Vec3(2, 2, 2);
  Vec3 Theta_t = Vec3(3, 3, 3);
  double rho_t = 1.0;

  Vec3 K_rp = Vec3(15, 20, 10);
  Vec3 K_rd = Vec3(10, 9, 5);
  Vec3 K_ri = Vec3(0.08, 0.08, 0.08);
  Vec3 Lambda_r = Vec3(8, 8, 8);
  Vec3 Gamma_r = Vec3(0.2, 0.2, 0.2);
  Vec3 Theta_r = Vec3(10, 10, 10);
  double rho_r = 0.02;

  void validate() const;
};

struct Setpoint {
  Vec3 p_d = Vec3::Zero();
  Vec3 v_d = Vec3::Zero();
  Vec3 a_d = Vec3::Zero();  // desired acceleration feedforward
  Mat3 R_d = Mat3::Identity();
  Vec3 omega_d = Vec3::Zero();      // body rates of the desired frame
  Vec3 omega_dot_d = Vec3::Zero();
};

// e_p = p_d - p, e_t1 = de_p + Lambda_t e_p, e_t2 = de_t1 + e_t1.
// The integral accumulates (K_ti + rho I) e_t1 + Gamma Tanh(Theta e_t1) by
// the trapezoidal rule; e_t1 at the first update is latched as e_t1(0).
struct TranslationalErrorState {
  Vec3 e_p = Vec3::Zero();
  Vec3 e_t1 = Vec3::Zero();
  Vec3 e_t2 = Vec3::Zero();
  Vec3 e_t1_at_start = Vec3::Zero();
  Vec3 integral = Vec3::Zero();
  Vec3 prev_integrand = Vec3::Zero();
  Vec3 prev_e_t1 = Vec3::Zero();
  bool started = false;

  void reset();
};

struct RotationalErrorState {
  Vec3 e_R = Vec3::Zero();
  Vec3 e_omega = Vec3::Zero();
  Vec3 e_r1 = Vec3::Zero();
  Vec3 e_r2 = Vec3::Zero();
  Vec3 e_r1_at_start = Vec3::Zero();
  Vec3 integral = Vec3::Zero();
  Vec3 prev_integrand = Vec3::Zero();
  Vec3 prev_e_r1 = Vec3::Zero();
  bool started = false;

  void reset();
};

// Smooth vs discontinuous robust term: Tanh(Theta e) or sign(e) with
// sign(0) = 0. Sign selects the RISE-style baseline.
enum class RobustShape { Tanh, Sign };

// Body-frame force command, f = f_n + f_r. Advances the error state by dt.
Vec3 grite_force(const RigidBodyState& state, const Setpoint& sp,
                 const GainSet& gains, const PlantParams& params,
                 TranslationalErrorState& err, double dt,
                 RobustShape shape = RobustShape::Tanh);

// Body-frame torque command, tau = tau_n + tau_r.
Vec3 grite_torque(const RigidBodyState& state, const Setpoint& sp,
                  const GainSet& gains, const PlantParams& params,
                  RotationalErrorState& err, double dt,
                  RobustShape shape = RobustShape::Tanh);

Vec3 grise_force(const RigidBodyState& state, const Setpoint& sp,
                 const GainSet& gains, const PlantParams& params,
                 TranslationalErrorState& err, double dt);

Vec3 grise_torque(const RigidBodyState& state, const Setpoint& sp,
                  const GainSet& gains, const PlantParams& params,
                  RotationalErrorState& err, double dt);

// Nominal-law baseline with a plain clamped integral on e_p / e_R.
struct GpidState {
  Vec3 integral_p = Vec3::Zero();
  Vec3 integral_R = Vec3::Zero();
  Vec3 prev_e_p = Vec3::Zero();
  Vec3 prev_e_R = Vec3::Zero();
  bool started = false;
  void reset();
};

Vec3 gpid_force(const RigidBodyState& state, const Setpoint& sp,
                const GainSet& gains, const PlantParams& params,
                GpidState& st, double dt);

Vec3 gpid_torque(const RigidBodyState& state, const Setpoint& sp,
                 const GainSet& gains, const PlantParams& params,
                 GpidState& st, double dt);

// Lyapunov evaluators. N_td / N_rd are analysis quantities that depend on
// the true disturbance; the harness passes them from the scripted model so
// the candidates are exactly computable in simulation.
struct LyapunovTerms {
  double V = 0.0;
  double Q = 0.0;    // the ln-cosh block
  double psi = 0.0;  // rotational only
};

LyapunovTerms lyapunov_translational(const TranslationalErrorState& err,
                                     const PlantParams& params,
                                     const GainSet& gains, const Vec3& N_td);

LyapunovTerms lyapunov_rotational(const RotationalErrorState& err,
                                  const Mat3& R, const Mat3& R_d,
                                  const PlantParams& params,
                                  const GainSet& gains, const Vec3& N_rd);

// Gain condition of the boundedness theorems against a scripted disturbance:
// Gamma_i >= ||N_d,i||_inf + ||dN_d,i||_inf, checked component-wise.
bool certify_gain_condition(const Vec3& Gamma, const Vec3& N_d_inf,
                            const Vec3& N_d_dot_inf);

enum class ControllerType { Grite, Gpid, Grise };

ControllerType controller_type_from_string(const std::string& s);
std::string to_string(ControllerType t);

// One instance per vehicle; owns the mutable accumulators.
class PoseController {
 public:
  PoseController(ControllerType type, GainSet gains, PlantParams params);

  Wrench step(const RigidBodyState& state, const Setpoint& sp, double dt);
  void reset();

  const TranslationalErrorState& translational() const { return trans_; }
  const RotationalErrorState& rotational() const { return rot_; }
  TranslationalErrorState& translational() { return trans_; }
  RotationalErrorState& rotational() { return rot_; }
  ControllerType type() const { return type_; }
  const GainSet& gains() const { return gains_; }
  const PlantParams& params() const { return params_; }

 private:
  ControllerType type_;
  GainSet gains_;
  PlantParams params_;
  TranslationalErrorState trans_;
  RotationalErrorState rot_;
  GpidState gpid_;
};

}  // namespace oam

#endif  // OAM_CONTROLLER_HPP_
