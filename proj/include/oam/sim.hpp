#ifndef OAM_SIM_HPP_
#define OAM_SIM_HPP_

#include <optional>
#include <string>
#include <vector>

#include "oam/controller.hpp"
#include "oam/planner_nmpc.hpp"
#include "oam/planner_offline.hpp"
#include "oam/robot_model.hpp"
#include "oam/state.hpp"

namespace oam {

struct NonFiniteState : std::runtime_error {
  explicit NonFiniteState(const std::string& what) : std::runtime_error(what) {}
};

struct EmptyTelemetry : std::runtime_error {
  explicit EmptyTelemetry(const std::string& what) : std::runtime_error(what) {}
};

struct RunFailed : std::runtime_error {
  explicit RunFailed(const std::string& what) : std::runtime_error(what) {}
};

struct ActuatorState {
  Vec6 thrust = Vec6::Zero();  // realized rotor thrusts, N
  Vec6 tilt = Vec6::Zero();    // realized servo angles, rad
  bool initialized = false;
};

struct PlantOptions {
  bool actuator_lags = true;
  double tau_rotor = 0.03;      // s, rotor first-order lag
  double tau_servo = 0.06;      // s, tilt-servo first-order lag
  double joint_omega_n = 20.0;  // rad/s, critically damped arm joint servo
};

// Scripted disturbance acting on the plant. All components are smooth; the
// arm-sweep reaction is synthesized analytically from the scripted joint
// motion rather than simulated as multibody dynamics.
class DisturbanceModel {
 public:
  struct ArmSweep {
    bool enabled = false;
    double amplitude = M_PI / 4;  // rad, joints 1-2 sweep -A..A
    double period = 10.0;         // s
    // Point masses sized so the reaction stays inside the robust-gain
    // premise Gamma >= |N|_inf + |dN|_inf with the stock gain set.
    double m1 = 0.07, m2 = 0.06;  // kg
    double l1 = 0.15, l2 = 0.12;  // m
    Vec3 mount = Vec3(0, 0, 0.10);
    Mat3 R_ref = Mat3::Identity();  // attitude for the gravity-shift torque
    double g = 9.81;
  };

  struct Sinusoid {
    bool enabled = false;
    Vec3 force_amp = Vec3::Zero();   // N, world frame
    Vec3 torque_amp = Vec3::Zero();  // N*m, body frame
    double freq = 1.0;               // rad/s
  };

  struct GroundEffect {
    bool enabled = false;
    double gain = 0.15;          // fraction of hover thrust
    double length_scale = 0.35;  // m
    double hover_force = 2.13 * 9.81;
    double ground_height = 0.0;
    // Optional raised surface (table top): active when the base is above it.
    bool has_table = false;
    Vec3 table_center = Vec3::Zero();
    Vec3 table_half_extent = Vec3::Zero();
  };

  // Constant world-frame wrench switched on smoothly at t_on (pull
  // resistance, payload bias).
  struct ConstantAfter {
    bool enabled = false;
    double t_on = 0.0;
    double ramp = 0.5;  // s, smoothstep ramp
    Vec3 force = Vec3::Zero();
    Vec3 torque = Vec3::Zero();
  };

  ArmSweep arm;
  Sinusoid sinusoid;
  GroundEffect ground_effect;
  ConstantAfter constant;

  Vec3 d_t(double t, const RigidBodyState& state) const;  // N, world
  Vec3 d_r(double t, const RigidBodyState& state) const;  // N*m, body

  // Time derivatives of the scripted (state-independent) components,
  // central-differenced; used by the Lyapunov evaluators.
  Vec3 d_t_dot(double t) const;
  Vec3 d_r_dot(double t) const;

  // Component-wise sup of |d_dot| and |d_ddot| over [0, horizon].
  void derivative_bounds(double horizon, Vec3* dt_dot_inf, Vec3* dt_ddot_inf,
                         Vec3* dr_dot_inf, Vec3* dr_ddot_inf) const;

  // Scripted arm-sweep joint targets (joints 1, 2 active).
  bool sweep_targets(double t, Vec3* theta_d, Vec3* theta_dot_d) const;

 private:
  Vec3 scripted_d_t(double t) const;
  Vec3 scripted_d_r(double t) const;
};

// One RK4 step (Munthe-Kaas form: attitude integrated on the exponential
// chart) of the rigid-body dynamics with actuator lag states and the arm
// joint servos. Returns the realized body wrench for telemetry.
struct PlantStepResult {
  RigidBodyState state;
  Wrench realized;
};

PlantStepResult plant_step(const RigidBodyState& state, ActuatorState& act,
                           const ActuatorCommand& cmd, const Vec3& theta_cmd,
                           const Vec3& theta_dot_cmd,
                           const DisturbanceModel& dist,
                           const PlantParams& params,
                           const AllocationConfig& alloc,
                           const PlantOptions& opts, double t, double dt);

struct TelemetryRow {
  double t = 0.0;
  Vec3 p = Vec3::Zero();
  Eigen::Vector4d q = Eigen::Vector4d::Zero();  // [w, x, y, z]
  Vec3 e_p = Vec3::Zero();
  double d_g = 0.0;
  Vec3 f = Vec3::Zero();
  Vec3 tau = Vec3::Zero();
  Vec6 thrust = Vec6::Zero();
  Vec6 tilt = Vec6::Zero();
  double V_t = 0.0;
  double V_r = 0.0;
};

struct SolverLogEntry {
  double t = 0.0;
  double wall_ms = 0.0;
  int iterations = 0;
  int inner_iterations = 0;
  double min_certificate = 0.0;
  std::string status;
};

struct RunMetrics {
  double pos_rms_cm = 0.0, pos_mean_cm = 0.0, pos_std_cm = 0.0;
  double ang_rms_deg = 0.0, ang_mean_deg = 0.0, ang_std_deg = 0.0;
  double nmpc_ms_min = 0.0, nmpc_ms_max = 0.0, nmpc_ms_mean = 0.0;
  int nmpc_solves = 0;
  double min_certificate = std::numeric_limits<double>::infinity();
  bool grasp_fired = false;
  double grasp_time = -1.0;
  bool pull_completed = false;
  double max_tilt_deg = 0.0;
  double max_orthonormality = 0.0;
  std::string status = "ok";
};

// RMS/mean/std of ||e_p|| (cm) and the geodesic error (deg) over the rows.
RunMetrics compute_metrics(const std::vector<TelemetryRow>& rows);

struct Scenario {
  std::string name;
  RigidBodyState initial;
  ObstacleSet obstacles;
  DisturbanceModel disturbance;

  // Manipulation pipeline (ignored by regulation scenarios).
  Vec3 ee_goal_p = Vec3::Zero();
  Mat3 ee_goal_R = Mat3::Identity();
  bool use_orientation_goal = true;
  double T_f = 10.0;       // s, approach horizon
  double T_f_pull = 4.0;   // s, pull horizon
  Vec3 pull_offset = Vec3::Zero();  // world displacement of the pull goal
  double payload_mass = 0.1;        // kg, attached at grasp
  double grasp_distance = 0.03;     // m
  double grasp_dwell = 1.5;         // s
  double max_duration = 45.0;       // s

  // Pose regulation (controller comparison) scenarios.
  bool regulation_only = false;
  Setpoint regulation_setpoint;
  double regulation_duration = 20.0;
};

struct RunOptions {
  ControllerType controller = ControllerType::Grite;
  unsigned seed = 0;
  bool disable_collision_constraints = false;
  std::string out_dir;  // empty: write nothing
  double sim_hz = 1000.0;
  double ctrl_hz = 500.0;
  double nmpc_hz = 10.0;
  int infeasible_retry_budget = 10;
};

struct RunResult {
  RunMetrics metrics;
  std::vector<TelemetryRow> telemetry;
  std::vector<SolverLogEntry> solver_log;
  std::vector<SolverLogEntry> offline_log;
  std::optional<EeTrajectory> offline_plan;
  bool failed = false;
  std::string failure;
};

// Full configuration bundle; loadable from JSON (see config.hpp).
struct OamConfig;

// Built-in scenario definitions mirroring the experiment setups.
std::vector<std::string> scenario_names();
Scenario make_scenario(const std::string& name, const OamConfig& config);

RunResult run_scenario(const Scenario& scenario, const OamConfig& config,
                       const RunOptions& options);

void write_telemetry_csv(const std::string& path,
                         const std::vector<TelemetryRow>& rows);

std::string metrics_to_json(const RunMetrics& m);

}  // namespace oam

#endif  // OAM_SIM_HPP_
