#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "oam/config.hpp"
#include "oam/sim.hpp"

namespace oam {

namespace {

enum class Phase { Regulation, Approach, Dwell, Pull, Settle };

struct CertificateCheck {
  double min_value = std::numeric_limits<double>::infinity();
  bool violated = false;
};

CertificateCheck ground_truth_certificates(const RigidBodyState& state,
                                           const ObstacleSet& obs,
                                           const OamConfig& cfg) {
  CertificateCheck out;
  if (obs.ellipsoids.empty() && !obs.has_ground) return out;
  const Vec3 theta = state.theta.head<3>();
  const auto ells = body_ellipsoids(state.p, state.R, theta, cfg.arm, cfg.bodies);
  for (const auto& e : ells) {
    for (const auto& o : obs.ellipsoids) {
      out.min_value = std::min(out.min_value, minkowski_separation(e, o));
    }
  }
  if (obs.has_ground) {
    const auto spheres = body_spheres(state.p, state.R, theta, cfg.arm, cfg.bodies);
    for (double c : ground_clearance(spheres, obs.ground_height)) {
      out.min_value = std::min(out.min_value, c);
    }
  }
  out.violated = out.min_value <= 0.0;
  return out;
}

void write_solver_log(const std::string& path, const RunOptions& options,
                      const std::vector<SolverLogEntry>& nmpc,
                      const std::vector<SolverLogEntry>& offline) {
  nlohmann::json j;
  j["seed"] = options.seed;
  auto dump = [](const std::vector<SolverLogEntry>& v) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : v) {
      arr.push_back({{"t", e.t},
                     {"wall_ms", e.wall_ms},
                     {"iterations", e.iterations},
                     {"inner_iterations", e.inner_iterations},
                     {"min_certificate", std::isfinite(e.min_certificate)
                                             ? e.min_certificate
                                             : 1e30},
                     {"status", e.status}});
    }
    return arr;
  };
  j["nmpc"] = dump(nmpc);
  j["offline"] = dump(offline);
  std::ofstream out(path);
  out << j.dump(2) << "\n";
}

}  // namespace

RunResult run_scenario(const Scenario& scenario, const OamConfig& config,
                       const RunOptions& options) {
  RunResult res;

  PlantParams true_params = config.plant;
  PoseController controller(options.controller, config.gains, config.plant);
  DisturbanceModel dist = scenario.disturbance;
  RigidBodyState state = scenario.initial;
  ActuatorState act;

  const double sim_dt = 1.0 / options.sim_hz;
  const double ctrl_dt = 1.0 / options.ctrl_hz;
  const int ctrl_every = static_cast<int>(std::lround(options.sim_hz / options.ctrl_hz));
  const int nmpc_every = static_cast<int>(std::lround(options.sim_hz / options.nmpc_hz));
  const double nmpc_interval = 1.0 / options.nmpc_hz;

  ObstacleSet planning_obstacles = scenario.obstacles;
  if (options.disable_collision_constraints) {
    planning_obstacles.ellipsoids.clear();
    planning_obstacles.has_ground = false;
  }

  NmpcParams nmpc_params = config.nmpc;
  nmpc_params.collision_enabled = !options.disable_collision_constraints;
  nmpc_params.use_orientation_cost = scenario.use_orientation_goal;
  NmpcPlanner planner(config.arm, config.bodies, nmpc_params);

  std::optional<EeTrajectory> ee_traj;
  Phase phase = scenario.regulation_only ? Phase::Regulation : Phase::Approach;

  auto plan_offline = [&](const Vec3& goal_p, const Mat3& goal_R, double T_f,
                          double t_now) {
    const FkResult fk =
        forward_kinematics(state.p, state.R, state.theta.head<3>(), config.arm);
    OfflinePlanParams op = config.offline;
    op.T_f = T_f;
    const EeTranslationalPlan trans =
        plan_ee_translation(fk.ee.p, goal_p, planning_obstacles, op);
    res.offline_log.push_back({t_now, trans.stats.wall_time_ms,
                               trans.stats.outer_iterations,
                               trans.stats.inner_iterations, 0.0,
                               to_string(trans.stats.status)});
    if (scenario.use_orientation_goal) {
      const EeRotationalPlan rot = plan_ee_rotation(fk.ee.R, goal_R, op);
      res.offline_log.push_back({t_now, rot.stats.wall_time_ms,
                                 rot.stats.outer_iterations,
                                 rot.stats.inner_iterations, 0.0,
                                 to_string(rot.stats.status)});
      ee_traj = EeTrajectory(trans, &rot, t_now);
    } else {
      ee_traj = EeTrajectory(trans, nullptr, t_now);
    }
  };

  try {
    if (!scenario.regulation_only) {
      plan_offline(scenario.ee_goal_p, scenario.ee_goal_R, scenario.T_f, 0.0);
      res.offline_plan = ee_traj;
    }
  } catch (const std::exception& e) {
    res.failed = true;
    res.failure = std::string("offline planning: ") + e.what();
    res.metrics.status = res.failure;
    return res;
  }

  std::shared_ptr<const TrajectoryPlan> plan;
  int consecutive_infeasible = 0;

  Setpoint sp;
  sp.p_d = state.p;
  sp.R_d = state.R;
  Setpoint hold_sp = sp;
  Vec3 theta_cmd = state.theta.head<3>();
  Vec3 theta_dot_cmd = Vec3::Zero();
  ActuatorCommand cmd;
  Wrench realized;  // actuator wrench applied during the last plant step
  bool have_realized = false;

  const double duration = scenario.regulation_only
                              ? scenario.regulation_duration
                              : scenario.max_duration;
  const int total_steps = static_cast<int>(std::lround(duration / sim_dt));

  double dwell_start = 0.0;
  double settle_start = 0.0;
  Vec3 pull_goal = scenario.ee_goal_p + scenario.pull_offset;
  double min_certificate = std::numeric_limits<double>::infinity();
  bool collided = false;

  const int n_window = nmpc_params.horizon() + 1;

  for (int step = 0; step <= total_steps; ++step) {
    const double t = step * sim_dt;

    // --- Online replanning (synchronous at the NMPC cadence) ---
    if (!scenario.regulation_only && ee_traj && step % nmpc_every == 0) {
      std::vector<EeRef> window(n_window);
      for (int k = 0; k < n_window; ++k) {
        window[k] = ee_traj->sample(t + k * nmpc_params.dt);
      }
      WholeBodyConfig x0{state.p, state.R, state.theta.head<3>()};
      TrajectoryPlan candidate =
          planner.solve(x0, window, planning_obstacles, t);
      res.solver_log.push_back({t, candidate.wall_time_ms, candidate.iterations,
                                candidate.inner_iterations,
                                candidate.min_certificate,
                                to_string(candidate.status)});
      if (candidate.feasible) {
        plan = std::make_shared<const TrajectoryPlan>(std::move(candidate));
        consecutive_infeasible = 0;
      } else {
        ++consecutive_infeasible;
        if (consecutive_infeasible > options.infeasible_retry_budget) {
          res.failed = true;
          res.failure = "plan infeasible beyond retry budget";
          break;
        }
      }
    }

    // --- Control update ---
    if (step % ctrl_every == 0) {
      if (scenario.regulation_only) {
        sp = scenario.regulation_setpoint;
        dist.sweep_targets(t, &theta_cmd, &theta_dot_cmd);
      } else if (plan) {
        const double age = t - plan->stamp;
        if (age <= 2.0 * nmpc_interval + 1e-9 && age <= plan->horizon() + 1e-9) {
          Vec3 th_d, th_dot_d;
          sp = plan_to_setpoints(*plan, t, &th_d, &th_dot_d);
          theta_cmd = th_d;
          theta_dot_cmd = th_dot_d;
          hold_sp = sp;
          hold_sp.v_d.setZero();
          hold_sp.a_d.setZero();
          hold_sp.omega_d.setZero();
          hold_sp.omega_dot_d.setZero();
        } else {
          sp = hold_sp;  // stale beyond tolerance: hover-hold
          theta_dot_cmd.setZero();
        }
      }

      const Wrench w = controller.step(state, sp, ctrl_dt);
      try {
        cmd = allocate(w, config.allocation);
      } catch (const SingularAllocation& e) {
        res.failed = true;
        res.failure = e.what();
        break;
      }

      // Telemetry with exactly-computed Lyapunov candidates.
      TelemetryRow row;
      row.t = t;
      row.p = state.p;
      row.q = rotation_to_quaternion_wxyz(state.R);
      row.e_p = sp.p_d - state.p;
      row.d_g = geodesic_distance(state.R, sp.R_d);
      row.f = w.force;
      row.tau = w.torque;
      row.thrust = act.initialized ? act.thrust : cmd.thrust;
      row.tilt = act.initialized ? act.tilt : cmd.tilt;

      {
        const Wrench applied = have_realized ? realized : w;
        const Vec3 e_p = sp.p_d - state.p;
        const Vec3 de_p = sp.v_d - state.v;
        const Vec3 e_t1 = de_p + config.gains.Lambda_t.cwiseProduct(e_p);
        const Vec3 v_dot =
            (state.R * applied.force - true_params.m * true_params.g * Vec3::UnitZ() +
             dist.d_t(t, state)) /
            true_params.m;
        const Vec3 dde_p = sp.a_d - v_dot;
        const Vec3 de_t1 = dde_p + config.gains.Lambda_t.cwiseProduct(de_p);
        TranslationalErrorState et;
        et.e_p = e_p;
        et.e_t1 = e_t1;
        et.e_t2 = de_t1 + e_t1;
        const Vec3 N_td = -dist.d_t_dot(t);  // desired jerk is zero (ZOH accel)
        row.V_t = lyapunov_translational(et, true_params, config.gains, N_td).V;

        const Mat3 Q = state.R.transpose() * sp.R_d;
        const AttitudeError att = attitude_error(state.R, sp.R_d);
        const Vec3 e_omega = Q * sp.omega_d - state.omega;
        const Vec3 e_r1 = e_omega + config.gains.Lambda_r.cwiseProduct(att.e_R);
        const Vec3 omega_dot =
            true_params.J_b.inverse() *
            (applied.torque + dist.d_r(t, state) -
             state.omega.cross(true_params.J_b * state.omega));
        const Vec3 de_omega = -hat(state.omega) * Q * sp.omega_d +
                              Q * sp.omega_dot_d - omega_dot;
        const Vec3 de_R = error_c_matrix(state.R, sp.R_d) * e_omega;
        const Vec3 de_r1 = de_omega + config.gains.Lambda_r.cwiseProduct(de_R);
        RotationalErrorState er;
        er.e_R = att.e_R;
        er.e_omega = e_omega;
        er.e_r1 = e_r1;
        er.e_r2 = de_r1 + e_r1;
        const Vec3 N_rd = -dist.d_r_dot(t);  // nominal inertia matches truth
        row.V_r =
            lyapunov_rotational(er, state.R, sp.R_d, true_params, config.gains, N_rd)
                .V;
      }
      res.telemetry.push_back(row);

      res.metrics.max_tilt_deg =
          std::max(res.metrics.max_tilt_deg,
                   std::acos(std::clamp(state.R(2, 2), -1.0, 1.0)) * 180.0 / M_PI);
      res.metrics.max_orthonormality =
          std::max(res.metrics.max_orthonormality, orthonormality_error(state.R));

      const CertificateCheck cert =
          ground_truth_certificates(state, scenario.obstacles, config);
      min_certificate = std::min(min_certificate, cert.min_value);
      if (cert.violated) {
        collided = true;
        if (!options.disable_collision_constraints) {
          res.failed = true;
          res.failure = "collision";
          break;
        }
      }
    }

    // --- Phase transitions ---
    if (!scenario.regulation_only) {
      const FkResult fk =
          forward_kinematics(state.p, state.R, state.theta.head<3>(), config.arm);
      switch (phase) {
        case Phase::Approach:
          if ((fk.ee.p - scenario.ee_goal_p).norm() < scenario.grasp_distance) {
            phase = Phase::Dwell;
            dwell_start = t;
            res.metrics.grasp_fired = true;
            res.metrics.grasp_time = t;
          }
          break;
        case Phase::Dwell:
          if (t - dwell_start >= scenario.grasp_dwell) {
            // Grasp succeeded: attach payload, plan the pull.
            true_params.m += scenario.payload_mass;
            dist.constant.enabled = true;
            dist.constant.t_on = t;
            dist.constant.force =
                -0.8 * scenario.pull_offset.normalized();  // drag of the object
            try {
              plan_offline(pull_goal, scenario.ee_goal_R, scenario.T_f_pull, t);
            } catch (const std::exception& e) {
              res.failed = true;
              res.failure = std::string("pull planning: ") + e.what();
            }
            phase = Phase::Pull;
          }
          break;
        case Phase::Pull:
          if ((fk.ee.p - pull_goal).norm() < scenario.grasp_distance) {
            res.metrics.pull_completed = true;
            phase = Phase::Settle;
            settle_start = t;
          }
          break;
        case Phase::Settle:
          if (t - settle_start > 0.5) step = total_steps;  // done
          break;
        case Phase::Regulation:
          break;
      }
      if (res.failed) break;
    }

    if (step >= total_steps) break;

    // --- Plant integration ---
    try {
      PlantStepResult ps =
          plant_step(state, act, cmd, theta_cmd, theta_dot_cmd, dist, true_params,
                     config.allocation, config.plant_options, t, sim_dt);
      state = ps.state;
      realized = ps.realized;
      have_realized = true;
    } catch (const NonFiniteState& e) {
      res.failed = true;
      res.failure = e.what();
      break;
    }
  }

  if (!scenario.regulation_only && !res.failed && !res.metrics.pull_completed) {
    res.failed = true;
    res.failure = "timeout before pull completion";
  }

  if (res.telemetry.empty()) {
    res.failed = true;
    if (res.failure.empty()) res.failure = "no telemetry";
    res.metrics.status = res.failure;
    return res;
  }

  const RunMetrics base = compute_metrics(res.telemetry);
  res.metrics.pos_rms_cm = base.pos_rms_cm;
  res.metrics.pos_mean_cm = base.pos_mean_cm;
  res.metrics.pos_std_cm = base.pos_std_cm;
  res.metrics.ang_rms_deg = base.ang_rms_deg;
  res.metrics.ang_mean_deg = base.ang_mean_deg;
  res.metrics.ang_std_deg = base.ang_std_deg;
  res.metrics.min_certificate = min_certificate;

  if (!res.solver_log.empty()) {
    double mn = 1e30, mx = 0, sum = 0;
    for (const auto& e : res.solver_log) {
      mn = std::min(mn, e.wall_ms);
      mx = std::max(mx, e.wall_ms);
      sum += e.wall_ms;
    }
    res.metrics.nmpc_ms_min = mn;
    res.metrics.nmpc_ms_max = mx;
    res.metrics.nmpc_ms_mean = sum / res.solver_log.size();
    res.metrics.nmpc_solves = static_cast<int>(res.solver_log.size());
  }

  if (collided) {
    res.metrics.status = "collision";
  } else if (res.failed) {
    res.metrics.status = res.failure;
  }

  if (!options.out_dir.empty()) {
    std::filesystem::create_directories(options.out_dir);
    write_telemetry_csv(options.out_dir + "/telemetry.csv", res.telemetry);
    std::ofstream metrics_out(options.out_dir + "/metrics.json");
    metrics_out << metrics_to_json(res.metrics) << "\n";
    if (res.offline_plan) {
      std::ofstream plan_out(options.out_dir + "/plan.json");
      plan_out << res.offline_plan->to_json() << "\n";
    }
    write_solver_log(options.out_dir + "/solver_log.json", options,
                     res.solver_log, res.offline_log);
  }
  return res;
}

}  // namespace oam
