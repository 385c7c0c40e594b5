#include "oam/planner_offline.hpp"

#include <cmath>

#include <json.hpp>

namespace oam {

EeTranslationalState ee_kinematics_step_translation(const EeTranslationalState& x,
                                                    const Vec3& jerk, double dt) {
  const Vec3 v1 = x.v + 0.5 * dt * x.a;
  const Vec3 a1 = x.a + 0.5 * dt * jerk;
  const Vec3 v2 = x.v + 0.5 * dt * a1;
  const Vec3 a2 = x.a + 0.5 * dt * jerk;
  const Vec3 v3 = x.v + dt * a2;
  const Vec3 a3 = x.a + dt * jerk;

  EeTranslationalState out;
  out.p = x.p + dt / 6.0 * (x.v + 2.0 * v1 + 2.0 * v2 + v3);
  out.v = x.v + dt / 6.0 * (x.a + 2.0 * a1 + 2.0 * a2 + a3);
  out.a = x.a + dt * jerk;
  return out;
}

EeRotationalState ee_kinematics_step_rotation(const EeRotationalState& x,
                                              const Vec3& omega_ddot, double dt) {
  const Vec3 w1 = x.omega + 0.5 * dt * x.omega_dot;
  const Vec3 wd1 = x.omega_dot + 0.5 * dt * omega_ddot;
  const Vec3 w2 = x.omega + 0.5 * dt * wd1;
  const Vec3 wd2 = x.omega_dot + 0.5 * dt * omega_ddot;
  const Vec3 w3 = x.omega + dt * wd2;
  const Vec3 wd3 = x.omega_dot + dt * omega_ddot;

  EeRotationalState out;
  out.R = x.R * exp_so3(dt / 6.0 * (x.omega + 2.0 * w1 + 2.0 * w2 + w3));
  out.omega = x.omega + dt / 6.0 * (x.omega_dot + 2.0 * wd1 + 2.0 * wd2 + wd3);
  out.omega_dot = x.omega_dot + dt * omega_ddot;
  if (orthonormality_error(out.R) > 1e-9) {
    out.R = project_to_so3(out.R);
  }
  return out;
}

namespace {

// Impulse response of the per-axis triple integrator: effect of a unit jerk,
// s full steps after the step in which it was applied.
struct JerkResponse {
  double p, v, a;
};

JerkResponse jerk_response(int s, double dt) {
  const double d3 = dt * dt * dt;
  return {d3 * (1.0 / 6.0 + 0.5 * s + 0.5 * s * s), dt * dt * (0.5 + s), dt};
}

Ellipsoid inflate(const Ellipsoid& e, double radius) {
  return {e.center, inflate_shape(e.shape, radius)};
}

// Min-jerk quintic rest-to-rest profile used as the initial guess: jerk of
// p0 + dp (10 s^3 - 15 s^4 + 6 s^5) sampled at interval midpoints. An
// optional sin(pi s) lateral bow breaks the symmetry when the straight
// segment is obstructed (a dead-center obstacle is a saddle of the NLP).
VecX quintic_jerk_guess(const Vec3& dp, int N, double dt,
                        const Vec3& bow = Vec3::Zero()) {
  const double T = N * dt;
  VecX z = VecX::Zero(3 * N);
  const double pi3 = M_PI * M_PI * M_PI;
  for (int k = 0; k < N; ++k) {
    const double s = (k + 0.5) * dt / T;
    const double coef = (60.0 - 360.0 * s + 360.0 * s * s) / (T * T * T);
    z.segment<3>(3 * k) = dp * coef - bow * pi3 * std::cos(M_PI * s) / (T * T * T);
  }
  return z;
}

// Lateral bow vector clearing the straight start-goal segment past the
// obstacles' bounding spheres.
Vec3 detour_bow(const Vec3& start, const Vec3& goal,
                const std::vector<Ellipsoid>& obstacles) {
  const Vec3 u = goal - start;
  const double len = u.norm();
  if (len < 1e-9) return Vec3::Zero();
  const Vec3 dir = u / len;
  Vec3 bow = Vec3::Zero();
  double worst = 0.0;
  for (const auto& e : obstacles) {
    const double along = std::clamp((e.center - start).dot(dir), 0.0, len);
    const Vec3 closest = start + along * dir;
    Vec3 lateral = closest - e.center;
    lateral -= lateral.dot(dir) * dir;
    Eigen::SelfAdjointEigenSolver<Mat3> es(e.shape);
    const double radius = std::sqrt(es.eigenvalues().maxCoeff());
    const double clearance = lateral.norm() - radius;
    if (clearance < 0.1 && -clearance + 0.1 > worst) {
      worst = -clearance + 0.1;
      if (lateral.norm() < 1e-9) {
        lateral = dir.cross(Vec3::UnitZ());
        if (lateral.norm() < 1e-9) lateral = dir.cross(Vec3::UnitX());
      }
      bow = lateral.normalized() * worst;
    }
  }
  return bow;
}

}  // namespace

EeTranslationalPlan plan_ee_translation(const Vec3& start, const Vec3& goal,
                                        const ObstacleSet& obstacles,
                                        const OfflinePlanParams& params) {
  const int N = params.knots();
  const double dt = params.dt;

  std::vector<Ellipsoid> inflated;
  inflated.reserve(obstacles.ellipsoids.size());
  for (const auto& e : obstacles.ellipsoids) inflated.push_back(inflate(e, params.ee_radius));

  for (const auto& e : inflated) {
    if (point_barrier(start, e).h <= 0.0) {
      throw StartInCollision("EE start inside inflated obstacle");
    }
    if (point_barrier(goal, e).h <= 0.0) {
      throw StartInCollision("EE goal inside inflated obstacle");
    }
  }
  if (obstacles.has_ground) {
    if (start.z() < obstacles.ground_height + params.ee_radius ||
        goal.z() < obstacles.ground_height + params.ee_radius) {
      throw StartInCollision("EE start or goal below ground clearance");
    }
  }

  // Rollout of the affine dynamics given the flat jerk vector.
  auto rollout = [&](const VecX& z) {
    std::vector<EeTranslationalState> xs(N + 1);
    xs[0] = {start, Vec3::Zero(), Vec3::Zero()};
    for (int k = 0; k < N; ++k) {
      xs[k + 1] = ee_kinematics_step_translation(xs[k], z.segment<3>(3 * k), dt);
    }
    return xs;
  };

  NlpProblem prob;
  prob.n = 3 * N;
  prob.objective = [&params, N](const VecX& z, VecX* grad) {
    double val = 0.0;
    if (grad) grad->setZero(z.size());
    for (int k = 0; k < N; ++k) {
      const Vec3 j = z.segment<3>(3 * k);
      val += j.dot(params.R_v * j);
      if (grad) grad->segment<3>(3 * k) = 2.0 * params.R_v * j;
    }
    return val;
  };

  prob.n_eq = 9;  // terminal state [p_g; 0; 0]
  prob.eq_constraints = [&, N, dt](const VecX& z, VecX* c, MatX* J) {
    const auto xs = rollout(z);
    if (c) {
      c->resize(9);
      c->segment<3>(0) = xs[N].p - goal;
      c->segment<3>(3) = xs[N].v;
      c->segment<3>(6) = xs[N].a;
    }
    if (J) {
      J->setZero(9, z.size());
      for (int l = 0; l < N; ++l) {
        const JerkResponse r = jerk_response(N - l - 1, dt);
        for (int ax = 0; ax < 3; ++ax) {
          (*J)(ax, 3 * l + ax) = r.p;
          (*J)(3 + ax, 3 * l + ax) = r.v;
          (*J)(6 + ax, 3 * l + ax) = r.a;
        }
      }
    }
  };

  const int n_obs = static_cast<int>(inflated.size());
  const int rows_per_knot = n_obs + (obstacles.has_ground ? 1 : 0);
  prob.n_ineq = rows_per_knot * N;  // knots 1..N; knot 0 is fixed
  if (prob.n_ineq > 0) {
    prob.ineq_constraints = [&, N, dt, n_obs, rows_per_knot](const VecX& z, VecX* g,
                                                             MatX* J) {
      const auto xs = rollout(z);
      if (g) g->resize(rows_per_knot * N);
      if (J) J->setZero(rows_per_knot * N, z.size());
      for (int k = 1; k <= N; ++k) {
        const int base = rows_per_knot * (k - 1);
        for (int i = 0; i < n_obs; ++i) {
          const BarrierValue b = point_barrier(xs[k].p, inflated[i]);
          const double h_tilde = b.grad.dot(xs[k].v) + params.gamma_rate * b.h;
          if (g) (*g)(base + i) = h_tilde - params.margin;
          if (J) {
            // d h_tilde / dp = 2 Q^{-1} v + gamma * grad, d h_tilde / dv = grad
            const Vec3 Qinv_v = inflated[i].shape.ldlt().solve(xs[k].v);
            const Vec3 dp = 2.0 * Qinv_v + params.gamma_rate * b.grad;
            const Vec3 dv = b.grad;
            for (int l = 0; l < k; ++l) {
              const JerkResponse r = jerk_response(k - l - 1, dt);
              J->block<1, 3>(base + i, 3 * l) =
                  (r.p * dp + r.v * dv).transpose();
            }
          }
        }
        if (obstacles.has_ground) {
          const int row = base + n_obs;
          if (g) {
            (*g)(row) = xs[k].p.z() - obstacles.ground_height - params.ee_radius -
                        params.margin;
          }
          if (J) {
            for (int l = 0; l < k; ++l) {
              (*J)(row, 3 * l + 2) = jerk_response(k - l - 1, dt).p;
            }
          }
        }
      }
    };
  }

  prob.initial_guess =
      quintic_jerk_guess(goal - start, N, dt, detour_bow(start, goal, inflated));
  prob.objective_hessian_diag = VecX(prob.n);
  for (int k = 0; k < N; ++k) {
    prob.objective_hessian_diag.segment<3>(3 * k) = 2.0 * params.R_v.diagonal();
  }

  const NlpSolution sol = nlp_solve(prob, params.nlp);
  if (sol.status != NlpStatus::Converged) {
    throw PlanInfeasible("EE translation OCP: " + to_string(sol.status));
  }

  EeTranslationalPlan plan;
  plan.dt = dt;
  plan.stats = sol;
  plan.knots = rollout(sol.z);
  plan.jerks.resize(N);
  for (int k = 0; k < N; ++k) plan.jerks[k] = sol.z.segment<3>(3 * k);

  // Positional barrier must hold at every knot, not just its rate form.
  for (int k = 0; k <= N; ++k) {
    for (const auto& e : inflated) {
      if (point_barrier(plan.knots[k].p, e).h <= 0.0) {
        throw PlanInfeasible("knot inside obstacle after solve");
      }
    }
  }
  return plan;
}

EeRotationalPlan plan_ee_rotation(const Mat3& R_start, const Mat3& R_goal,
                                  const OfflinePlanParams& params) {
  const int N = params.knots();
  const double dt = params.dt;

  if (!is_rotation(R_start, 1e-6) || !is_rotation(R_goal, 1e-6)) {
    throw std::invalid_argument("plan_ee_rotation: inputs must be rotations");
  }

  struct Rollout {
    std::vector<EeRotationalState> xs;
    std::vector<Vec3> phi;  // increment R(k+1) = R(k) exp(phi_k)
  };
  auto rollout = [&](const VecX& z) {
    Rollout r;
    r.xs.resize(N + 1);
    r.phi.resize(N);
    r.xs[0] = {R_start, Vec3::Zero(), Vec3::Zero()};
    for (int k = 0; k < N; ++k) {
      const Vec3 jerk = z.segment<3>(3 * k);
      r.phi[k] = dt * r.xs[k].omega + 0.5 * dt * dt * r.xs[k].omega_dot +
                 dt * dt * dt / 6.0 * jerk;
      r.xs[k + 1] = ee_kinematics_step_rotation(r.xs[k], jerk, dt);
    }
    return r;
  };

  NlpProblem prob;
  prob.n = 3 * N;
  prob.objective = [&params, N](const VecX& z, VecX* grad) {
    double val = 0.0;
    if (grad) grad->setZero(z.size());
    for (int k = 0; k < N; ++k) {
      const Vec3 j = z.segment<3>(3 * k);
      val += j.dot(params.R_omega * j);
      if (grad) grad->segment<3>(3 * k) = 2.0 * params.R_omega * j;
    }
    return val;
  };

  prob.n_eq = 6;  // omega(N), omega_dot(N); both linear in the jerks
  prob.eq_constraints = [&, N, dt](const VecX& z, VecX* c, MatX* J) {
    const Rollout r = rollout(z);
    if (c) {
      c->resize(6);
      c->segment<3>(0) = r.xs[N].omega;
      c->segment<3>(3) = r.xs[N].omega_dot;
    }
    if (J) {
      J->setZero(6, z.size());
      for (int l = 0; l < N; ++l) {
        const double dw = dt * dt * (N - l - 0.5);  // d omega(N) / d jerk_l
        for (int ax = 0; ax < 3; ++ax) {
          (*J)(ax, 3 * l + ax) = dw;
          (*J)(3 + ax, 3 * l + ax) = dt;
        }
      }
    }
  };

  // The terminal orientation is the trace residual driven below a threshold.
  // An equality tr(...) = 0 is degenerate (its gradient vanishes exactly at
  // feasibility), so the residual enters as psi <= psi_max instead.
  const double psi_max = 5e-7;
  prob.n_ineq = 1;
  prob.ineq_constraints = [&, N, dt](const VecX& z, VecX* g, MatX* J) {
    const Rollout r = rollout(z);
    const double psi = (Mat3::Identity() - R_goal.transpose() * r.xs[N].R).trace();
    if (g) {
      g->resize(1);
      (*g)(0) = psi_max - psi;
    }
    if (J) {
      J->setZero(1, z.size());
      // d psi / d phi_k = 2 Jr(phi_k)^T vee_skew(T_k Rg^T R(k+1)) with
      // T_k = E_{k+1} ... E_{N-1}; accumulated right-to-left.
      std::vector<Vec3> g_phi(N);
      Mat3 T = Mat3::Identity();
      for (int k = N - 1; k >= 0; --k) {
        const Mat3 A = T * R_goal.transpose() * r.xs[k + 1].R;
        g_phi[k] = 2.0 * so3_right_jacobian(r.phi[k]).transpose() * vee_skew(A);
        T = exp_so3(r.phi[k]) * T;  // now T = E_k ... E_{N-1}
      }
      // phi_k depends on the jerks through the double integrator chain:
      // d psi / d jerk_l = dt^3 [ g_l / 6 + sum_{k>l} (k - l) g_k ].
      const double d3 = dt * dt * dt;
      for (int l = 0; l < N; ++l) {
        Vec3 acc = g_phi[l] / 6.0;
        for (int k = l + 1; k < N; ++k) acc += (k - l) * g_phi[k];
        J->block<1, 3>(0, 3 * l) -= (d3 * acc).transpose();
      }
    }
  };

  // Initial guess: single-axis quintic through the relative rotation vector.
  prob.initial_guess = quintic_jerk_guess(log_so3(R_start.transpose() * R_goal), N, dt);
  prob.objective_hessian_diag = VecX(prob.n);
  for (int k = 0; k < N; ++k) {
    prob.objective_hessian_diag.segment<3>(3 * k) =
        2.0 * params.R_omega.diagonal();
  }

  NlpOptions opts = params.nlp;
  opts.tol_eq = 1e-6;
  opts.tol_ineq = 4e-7;  // psi_max + tol stays below the 1e-6 residual budget
  opts.penalty_cap = 1e10;
  const NlpSolution sol = nlp_solve(prob, opts);
  if (sol.status != NlpStatus::Converged) {
    throw PlanInfeasible("EE rotation OCP: " + to_string(sol.status));
  }

  EeRotationalPlan plan;
  plan.dt = dt;
  plan.stats = sol;
  const Rollout r = rollout(sol.z);
  plan.knots = r.xs;
  plan.angular_jerks.resize(N);
  for (int k = 0; k < N; ++k) plan.angular_jerks[k] = sol.z.segment<3>(3 * k);
  return plan;
}

EeTrajectory::EeTrajectory(const EeTranslationalPlan& trans,
                           const EeRotationalPlan* rot, double t0)
    : t0_(t0), dt_(trans.dt), has_orientation_(rot != nullptr) {
  knots_.resize(trans.knots.size());
  for (size_t k = 0; k < trans.knots.size(); ++k) {
    knots_[k].p = trans.knots[k].p;
    knots_[k].v = trans.knots[k].v;
    if (rot) {
      knots_[k].R = rot->knots[k].R;
      knots_[k].omega = rot->knots[k].omega;
    }
  }
}

EeRef EeTrajectory::sample(double t) const {
  if (knots_.empty()) return {};
  const double s = (t - t0_) / dt_;
  if (s <= 0.0) return knots_.front();
  if (s >= static_cast<double>(knots_.size() - 1)) {
    EeRef end = knots_.back();
    end.v.setZero();
    end.omega.setZero();
    return end;
  }
  const int k = static_cast<int>(s);
  const double a = s - k;
  const EeRef& lo = knots_[k];
  const EeRef& hi = knots_[k + 1];
  EeRef out;
  out.p = (1 - a) * lo.p + a * hi.p;
  out.v = (1 - a) * lo.v + a * hi.v;
  out.omega = (1 - a) * lo.omega + a * hi.omega;
  out.R = lo.R * exp_so3(a * log_so3(lo.R.transpose() * hi.R));
  return out;
}

std::string EeTrajectory::to_json() const {
  nlohmann::json j;
  j["dt"] = dt_;
  j["t0"] = t0_;
  j["has_orientation"] = has_orientation_;
  auto& arr = j["knots"] = nlohmann::json::array();
  for (size_t k = 0; k < knots_.size(); ++k) {
    nlohmann::json row;
    row["t"] = t0_ + k * dt_;
    row["p"] = {knots_[k].p.x(), knots_[k].p.y(), knots_[k].p.z()};
    row["v"] = {knots_[k].v.x(), knots_[k].v.y(), knots_[k].v.z()};
    std::vector<double> R_row_major;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) R_row_major.push_back(knots_[k].R(r, c));
    row["R"] = R_row_major;
    row["omega"] = {knots_[k].omega.x(), knots_[k].omega.y(), knots_[k].omega.z()};
    arr.push_back(row);
  }
  return j.dump(2);
}

EeTrajectory EeTrajectory::from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  EeTrajectory traj;
  traj.dt_ = j.at("dt").get<double>();
  traj.t0_ = j.at("t0").get<double>();
  traj.has_orientation_ = j.at("has_orientation").get<bool>();
  for (const auto& row : j.at("knots")) {
    EeRef ref;
    for (int i = 0; i < 3; ++i) {
      ref.p(i) = row.at("p")[i].get<double>();
      ref.v(i) = row.at("v")[i].get<double>();
      ref.omega(i) = row.at("omega")[i].get<double>();
    }
    const auto& R = row.at("R");
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) ref.R(r, c) = R[3 * r + c].get<double>();
    traj.knots_.push_back(ref);
  }
  return traj;
}

}  // namespace oam
