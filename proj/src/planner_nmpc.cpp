#include "oam/planner_nmpc.hpp"

#include <cmath>

namespace oam {

WholeBodyConfig wb_kinematics_step(const WholeBodyConfig& x,
                                   const WholeBodyInput& u, double dt) {
  WholeBodyConfig out;
  out.p = x.p + dt * u.v;
  out.R = x.R * exp_so3(dt * u.omega);
  out.theta = x.theta + dt * u.theta_dot;
  return out;
}

namespace {

bool axes_parallel(const ManipulatorModel& model) {
  for (size_t i = 1; i < model.joint_axes.size(); ++i) {
    if (model.joint_axes[i].cross(model.joint_axes[0]).norm() > 1e-9) return false;
  }
  return true;
}

}  // namespace

double manipulability(const Vec3& theta, const ManipulatorModel& model,
                      double mu_v, double mu_omega) {
  MatX J_v, J_w;
  relative_jacobians(theta, model, &J_v, &J_w);
  if (axes_parallel(model)) {
    // Planar arm: project onto the motion plane, drop the constant J_omega.
    const Vec3 n = model.joint_axes[0];
    const Vec3 b1 = (std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY())
                        .cross(n)
                        .normalized();
    const Vec3 b2 = n.cross(b1);
    Eigen::Matrix<double, 2, 3> P;
    P.row(0) = b1.transpose();
    P.row(1) = b2.transpose();
    const MatX Jp = P * J_v;
    return mu_v * (Jp * Jp.transpose()).determinant();
  }
  return mu_v * (J_v * J_v.transpose()).determinant() +
         mu_omega * (J_w * J_w.transpose()).determinant();
}

double stage_cost(const WholeBodyConfig& x, const EeRef& ee_ref,
                  const WholeBodyInput& u, const ManipulatorModel& model,
                  const NmpcParams& params) {
  const RelativeKinematics rel = forward_kinematics_relative(x.theta, model);
  const Vec3 ee_p = x.p + x.R * rel.ee.p;
  double phi_x = params.Q_p * (ee_p - ee_ref.p).squaredNorm() -
                 manipulability(x.theta, model, params.mu_v, params.mu_omega);
  if (params.use_orientation_cost) {
    const Mat3 ee_R = x.R * rel.ee.R;
    phi_x += params.Q_R *
             (Mat3::Identity() - ee_ref.R.transpose() * ee_R).trace();
  }
  const double phi_u = params.r_v * u.v.squaredNorm() +
                       params.r_omega * u.omega.squaredNorm() +
                       params.r_theta_dot * u.theta_dot.squaredNorm();
  return phi_x + phi_u;
}

namespace {

Vec3 manipulability_grad(const Vec3& theta, const ManipulatorModel& model,
                         double mu_v, double mu_omega) {
  const double h = 1e-5;
  Vec3 g;
  for (int i = 0; i < 3; ++i) {
    Vec3 tp = theta, tm = theta;
    tp(i) += h;
    tm(i) -= h;
    g(i) = (manipulability(tp, model, mu_v, mu_omega) -
            manipulability(tm, model, mu_v, mu_omega)) /
           (2 * h);
  }
  return g;
}

struct BodyFrame {
  Vec3 c_b = Vec3::Zero();  // ellipsoid center, base frame
  Mat3 relR = Mat3::Identity();
  int joint_count = 0;
  Mat3 dcb_dtheta = Mat3::Zero();
  const BodyEllipsoidSet::Body* desc = nullptr;
  double s0 = 0.0;  // sqrt(tr shape0), rotation invariant
};

struct KnotFrames {
  RelativeKinematics rel;
  std::vector<BodyFrame> bodies;
  MatX J_v;  // relative EE Jacobian at this knot
};

struct Rollout {
  std::vector<WholeBodyConfig> xs;
  std::vector<Mat3> E;   // exp(dt w_k)
  std::vector<Mat3> Jr;  // right Jacobian of exp at dt w_k
  std::vector<KnotFrames> frames;
};

// Gradient of a scalar w.r.t. one knot's (p, xi, theta), where xi is the
// body-frame rotation perturbation R -> R exp(xi^).
struct Locals {
  Vec3 gp = Vec3::Zero();
  Vec3 gxi = Vec3::Zero();
  Vec3 gth = Vec3::Zero();
};

class Transcription {
 public:
  Transcription(const ManipulatorModel& model, const BodyEllipsoidSet& bodies,
                const NmpcParams& params, const std::vector<EeRef>& window,
                const ObstacleSet& obs, const WholeBodyConfig& x0)
      : model_(model),
        bodies_(bodies),
        params_(params),
        window_(window),
        obs_(obs),
        x0_(x0),
        N_(params.horizon()),
        dt_(params.dt) {
    n_bodies_ = static_cast<int>(bodies_.bodies.size());
    n_obs_ = params_.collision_enabled ? static_cast<int>(obs_.ellipsoids.size()) : 0;
    use_ground_ = params_.collision_enabled && obs_.has_ground;
    use_self_ = params_.collision_enabled && params_.self_collision_pair &&
                n_bodies_ >= 2;
    n_poly_ = static_cast<int>(model_.A_theta.rows());
    for (const auto& e : obs_.ellipsoids) {
      obs_tr_sqrt_.push_back(std::sqrt(e.shape.trace()));
    }
  }

  int n() const { return 9 * N_; }
  int rows_per_knot() const {
    return n_bodies_ * n_obs_ + (use_ground_ ? n_bodies_ : 0) +
           (use_self_ ? 1 : 0) + n_poly_;
  }
  int n_ineq() const { return rows_per_knot() * N_; }
  double internal_margin() const { return params_.margin + params_.nlp.tol_ineq; }
  double poly_margin() const { return params_.nlp.tol_ineq; }

  const Rollout& rollout(const VecX& z) const {
    if (z_cache_.size() == z.size() && z_cache_ == z) return ro_;
    z_cache_ = z;
    ro_.xs.assign(N_ + 1, x0_);
    ro_.E.resize(N_);
    ro_.Jr.resize(N_);
    ro_.frames.resize(N_ + 1);
    for (int k = 0; k < N_; ++k) {
      const Vec3 w = z.segment<3>(9 * k + 3);
      ro_.E[k] = exp_so3(dt_ * w);
      ro_.Jr[k] = so3_right_jacobian(dt_ * w);
      const WholeBodyInput u{z.segment<3>(9 * k), w, z.segment<3>(9 * k + 6)};
      ro_.xs[k + 1] = wb_kinematics_step(ro_.xs[k], u, dt_);
    }
    for (int k = 0; k <= N_; ++k) build_frames(ro_.xs[k], &ro_.frames[k]);
    return ro_;
  }

  // EE position tracking enters as a least-squares block so the solver sees
  // its exact Gauss-Newton curvature.
  int n_residuals() const { return 3 * N_; }

  void residuals(const VecX& z, VecX* r, MatX* J) const {
    const Rollout& ro = rollout(z);
    const double w = std::sqrt(params_.Q_p);
    if (r) r->resize(3 * N_);
    if (J) J->setZero(3 * N_, z.size());
    for (int k = 1; k <= N_; ++k) {
      const WholeBodyConfig& x = ro.xs[k];
      const KnotFrames& f = ro.frames[k];
      const Vec3 ee_p = x.p + x.R * f.rel.ee.p;
      if (r) (*r).segment<3>(3 * (k - 1)) = w * (ee_p - window_[k].p);
      if (J) {
        for (int i = 0; i < 3; ++i) {
          Locals loc;
          const Vec3 Rt_e = x.R.transpose() * Vec3::Unit(i);
          loc.gp = w * Vec3::Unit(i);
          loc.gxi = w * f.rel.ee.p.cross(Rt_e);
          loc.gth = w * (f.J_v.transpose() * Rt_e);
          chain_row(ro, k, loc, *J, 3 * (k - 1) + i);
        }
      }
    }
  }

  // Exact second-order terms of the knot costs w.r.t. the body rotation
  // perturbation, chained through the rollout. These dominate the curvature
  // the Gauss-Newton model misses when tracking errors are large; the 3x3
  // blocks are PSD-clamped so the model stays positive semidefinite.
  void extra_hessian(const VecX& z, MatX* H) const {
    const Rollout& ro = rollout(z);
    std::vector<Mat3> G(N_);
    for (int k = 1; k <= N_; ++k) {
      const WholeBodyConfig& x = ro.xs[k];
      const KnotFrames& f = ro.frames[k];

      // d^2/dxi^2 of u . (R exp(xi^) r): 0.5 (y r^T + r y^T) - (y . r) I.
      const Vec3 ee_p = x.p + x.R * f.rel.ee.p;
      const Vec3 u = 2.0 * params_.Q_p * (ee_p - window_[k].p);
      const Vec3 y = x.R.transpose() * u;
      const Vec3 r = f.rel.ee.p;
      Mat3 B = 0.5 * (y * r.transpose() + r * y.transpose()) -
               y.dot(r) * Mat3::Identity();
      if (params_.use_orientation_cost) {
        // d^2/dxi^2 of q tr(I - Rd^T R exp(xi^) relR) = q (tr(M) I - sym(M)).
        const Mat3 M = f.rel.ee.R * window_[k].R.transpose() * x.R;
        B += params_.Q_R * (M.trace() * Mat3::Identity() -
                            0.5 * (M + M.transpose()));
      }
      Eigen::SelfAdjointEigenSolver<Mat3> es(B);
      const Vec3 lam = es.eigenvalues().cwiseMax(0.0);
      if (lam.maxCoeff() < 1e-12) continue;
      B = es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();

      // d xi(k) / d omega_j = dt T_{j,k}^T Jr_j, accumulated right-to-left.
      Mat3 P = Mat3::Identity();
      for (int j = k - 1; j >= 0; --j) {
        G[j] = dt_ * P * ro.Jr[j];
        P = P * ro.E[j].transpose();
      }
      for (int j = 0; j < k; ++j) {
        for (int l = 0; l < k; ++l) {
          H->block<3, 3>(9 * j + 3, 9 * l + 3) += G[j].transpose() * (B * G[l]);
        }
      }
    }
  }

  double objective(const VecX& z, VecX* grad) const {
    const Rollout& ro = rollout(z);
    double total = 0.0;
    std::vector<Locals> loc(N_ + 1);

    // The k = 0 tracking term is constant in z; keep it for value parity
    // with the stage-cost definition.
    {
      const Vec3 ee0 = ro.xs[0].p + ro.xs[0].R * ro.frames[0].rel.ee.p;
      total += params_.Q_p * (ee0 - window_[0].p).squaredNorm();
    }

    for (int k = 0; k <= N_; ++k) {
      const WholeBodyConfig& x = ro.xs[k];
      const KnotFrames& f = ro.frames[k];
      const EeRef& ref = window_[k];

      total -= manipulability(x.theta, model_, params_.mu_v, params_.mu_omega);
      if (grad && k > 0) {
        loc[k].gth -=
            manipulability_grad(x.theta, model_, params_.mu_v, params_.mu_omega);
      }
      if (params_.use_orientation_cost) {
        const Mat3 ee_R = x.R * f.rel.ee.R;
        total += params_.Q_R *
                 (Mat3::Identity() - ref.R.transpose() * ee_R).trace();
        if (grad && k > 0) {
          const Vec3 s =
              2.0 * params_.Q_R * vee_skew(f.rel.ee.R * ref.R.transpose() * x.R);
          loc[k].gxi += s;
          for (int j = 0; j < 3; ++j) {
            loc[k].gth(j) += s.dot(f.rel.world_axes[j]);
          }
        }
      }
    }

    if (grad) grad->setZero(z.size());
    for (int k = 0; k < N_; ++k) {
      const Vec3 v = z.segment<3>(9 * k);
      const Vec3 w = z.segment<3>(9 * k + 3);
      const Vec3 td = z.segment<3>(9 * k + 6);
      total += params_.r_v * v.squaredNorm() + params_.r_omega * w.squaredNorm() +
               params_.r_theta_dot * td.squaredNorm();
      if (grad) {
        grad->segment<3>(9 * k) += 2.0 * params_.r_v * v;
        grad->segment<3>(9 * k + 3) += 2.0 * params_.r_omega * w;
        grad->segment<3>(9 * k + 6) += 2.0 * params_.r_theta_dot * td;
      }
    }

    if (grad) {
      // Chain the per-knot locals through the shooting rollout.
      Vec3 sum_p = Vec3::Zero();
      Vec3 sum_th = Vec3::Zero();
      Vec3 w_acc = Vec3::Zero();
      for (int j = N_ - 1; j >= 0; --j) {
        sum_p += loc[j + 1].gp;
        sum_th += loc[j + 1].gth;
        w_acc = (j == N_ - 1) ? loc[N_].gxi : Vec3(loc[j + 1].gxi + ro.E[j + 1] * w_acc);
        grad->segment<3>(9 * j) += dt_ * sum_p;
        grad->segment<3>(9 * j + 6) += dt_ * sum_th;
        grad->segment<3>(9 * j + 3) += dt_ * ro.Jr[j].transpose() * w_acc;
      }
    }
    return total;
  }

  void inequalities(const VecX& z, VecX* g, MatX* J) const {
    const Rollout& ro = rollout(z);
    const int rpk = rows_per_knot();
    if (g) g->resize(rpk * N_);
    if (J) J->setZero(rpk * N_, z.size());

    for (int k = 1; k <= N_; ++k) {
      const WholeBodyConfig& x = ro.xs[k];
      const KnotFrames& f = ro.frames[k];
      int row = rpk * (k - 1);

      for (int i = 0; i < n_bodies_; ++i) {
        for (int o = 0; o < n_obs_; ++o) {
          Locals loc;
          const double h_hat = pair_certificate(
              x, f, f.bodies[i], obs_.ellipsoids[o].center,
              obs_.ellipsoids[o].shape, obs_tr_sqrt_[o], J ? &loc : nullptr);
          if (g) (*g)(row) = h_hat - internal_margin();
          if (J) chain_row(ro, k, loc, *J, row);
          ++row;
        }
      }
      if (use_ground_) {
        for (int i = 0; i < n_bodies_; ++i) {
          const BodyFrame& b = f.bodies[i];
          const Vec3 c_w = x.p + x.R * b.c_b;
          if (g) {
            (*g)(row) = c_w.z() - b.desc->ground_radius - obs_.ground_height -
                        internal_margin();
          }
          if (J) {
            Locals loc;
            const Vec3 Rt_ez = x.R.transpose() * Vec3::UnitZ();
            loc.gp = Vec3::UnitZ();
            loc.gxi = b.c_b.cross(Rt_ez);
            loc.gth = b.dcb_dtheta.transpose() * Rt_ez;
            chain_row(ro, k, loc, *J, row);
          }
          ++row;
        }
      }
      if (use_self_) {
        // Base ellipsoid against the most distal link.
        Locals loc;
        const double h_hat =
            self_pair_certificate(x, f, J ? &loc : nullptr);
        if (g) (*g)(row) = h_hat - internal_margin();
        if (J) chain_row(ro, k, loc, *J, row);
        ++row;
      }
      for (int r = 0; r < n_poly_; ++r) {
        if (g) {
          (*g)(row) = model_.b_theta(r) -
                      model_.A_theta.row(r).dot(x.theta) - poly_margin();
        }
        if (J) {
          Locals loc;
          loc.gth = -model_.A_theta.row(r).transpose();
          chain_row(ro, k, loc, *J, row);
        }
        ++row;
      }
    }
  }

 private:
  void build_frames(const WholeBodyConfig& x, KnotFrames* f) const {
    f->rel = forward_kinematics_relative(x.theta, model_);
    relative_jacobians(x.theta, model_, &f->J_v, nullptr);
    f->bodies.resize(n_bodies_);
    for (int i = 0; i < n_bodies_; ++i) {
      const auto& d = bodies_.bodies[i];
      BodyFrame& b = f->bodies[i];
      b.desc = &d;
      b.s0 = std::sqrt(d.shape0.trace());
      if (d.link_index == 0) {
        b.c_b = d.offset;
        b.relR = Mat3::Identity();
        b.joint_count = 0;
        b.dcb_dtheta.setZero();
      } else {
        const LinkPose& lp = f->rel.links[d.link_index - 1];
        b.relR = lp.R;
        b.c_b = lp.p + lp.R * d.offset;
        b.joint_count = d.link_index;
        b.dcb_dtheta.setZero();
        for (int l = 0; l < b.joint_count; ++l) {
          b.dcb_dtheta.col(l) =
              f->rel.world_axes[l].cross(b.c_b - f->rel.joint_origins[l]);
        }
      }
    }
  }

  void chain_row(const Rollout& ro, int k, const Locals& loc, MatX& J,
                 int row) const {
    for (int l = 0; l < k; ++l) {
      J.block<1, 3>(row, 9 * l) += dt_ * loc.gp.transpose();
      J.block<1, 3>(row, 9 * l + 6) += dt_ * loc.gth.transpose();
    }
    Vec3 y = loc.gxi;
    for (int j = k - 1; j >= 0; --j) {
      J.block<1, 3>(row, 9 * j + 3) += dt_ * (ro.Jr[j].transpose() * y).transpose();
      y = ro.E[j] * y;
    }
  }

  // Certificate between robot body bf and a static ellipsoid; locals receive
  // the gradient contributions of the body's center and orientation.
  double pair_certificate(const WholeBodyConfig& x, const KnotFrames& f,
                          const BodyFrame& bf, const Vec3& other_center,
                          const Mat3& other_shape, double other_tr_sqrt,
                          Locals* loc) const {
    const Mat3 R_w = x.R * bf.relR;
    const Vec3 c_w = x.p + x.R * bf.c_b;
    const double S = bf.s0 + other_tr_sqrt;
    const Mat3 Q_A = R_w * bf.desc->shape0 * R_w.transpose();
    const Mat3 M = S * (Q_A / bf.s0 + other_shape / other_tr_sqrt);
    const Vec3 d = c_w - other_center;
    const Vec3 u = M.ldlt().solve(d);
    const double h_hat = d.dot(u) - 1.0;
    if (loc) {
      accumulate_center(x, bf, 2.0 * u, loc);
      accumulate_shape(x, f, bf, u, S, loc);
    }
    return h_hat;
  }

  double self_pair_certificate(const WholeBodyConfig& x, const KnotFrames& f,
                               Locals* loc) const {
    const BodyFrame& a = f.bodies[n_bodies_ - 1];  // distal link
    const BodyFrame& b = f.bodies[0];              // base
    const Mat3 R_a = x.R * a.relR;
    const Mat3 R_b = x.R * b.relR;
    const Vec3 c_a = x.p + x.R * a.c_b;
    const Vec3 c_b = x.p + x.R * b.c_b;
    const Mat3 Q_a = R_a * a.desc->shape0 * R_a.transpose();
    const Mat3 Q_b = R_b * b.desc->shape0 * R_b.transpose();
    const double S = a.s0 + b.s0;
    const Mat3 M = S * (Q_a / a.s0 + Q_b / b.s0);
    const Vec3 d = c_a - c_b;
    const Vec3 u = M.ldlt().solve(d);
    const double h_hat = d.dot(u) - 1.0;
    if (loc) {
      accumulate_center(x, a, 2.0 * u, loc);
      accumulate_center(x, b, -2.0 * u, loc);
      accumulate_shape(x, f, a, u, S, loc);
      accumulate_shape(x, f, b, u, S, loc);
    }
    return h_hat;
  }

  // d h / d c_w = du; chain into p, xi, theta.
  void accumulate_center(const WholeBodyConfig& x, const BodyFrame& bf,
                         const Vec3& du, Locals* loc) const {
    const Vec3 Rt_du = x.R.transpose() * du;
    loc->gp += du;
    loc->gxi += bf.c_b.cross(Rt_du);
    loc->gth += bf.dcb_dtheta.transpose() * Rt_du;
  }

  // Sensitivity of h_hat to the body's shape orientation: with y = R_w^T u,
  // d h_hat / d xi_body = -(2 S / s0) (shape0 y) x y; xi_body = relR^T xi.
  void accumulate_shape(const WholeBodyConfig& x, const KnotFrames& f,
                        const BodyFrame& bf, const Vec3& u, double S,
                        Locals* loc) const {
    const Mat3 R_w = x.R * bf.relR;
    const Vec3 y = R_w.transpose() * u;
    const Vec3 d_local = -(2.0 * S / bf.s0) * (bf.desc->shape0 * y).cross(y);
    const Vec3 s_base = bf.relR * d_local;
    loc->gxi += s_base;
    for (int l = 0; l < bf.joint_count; ++l) {
      loc->gth(l) += s_base.dot(f.rel.world_axes[l]);
    }
  }

  const ManipulatorModel& model_;
  const BodyEllipsoidSet& bodies_;
  const NmpcParams& params_;
  const std::vector<EeRef>& window_;
  const ObstacleSet& obs_;
  WholeBodyConfig x0_;
  int N_;
  double dt_;
  int n_bodies_ = 0;
  int n_obs_ = 0;
  bool use_ground_ = false;
  bool use_self_ = false;
  int n_poly_ = 0;
  std::vector<double> obs_tr_sqrt_;

  mutable VecX z_cache_;
  mutable Rollout ro_;
};

}  // namespace

PlanValidation validate_plan(const TrajectoryPlan& plan, const WholeBodyConfig& x0,
                             const ObstacleSet& obstacles,
                             const ManipulatorModel& model,
                             const BodyEllipsoidSet& bodies,
                             const NmpcParams& params) {
  PlanValidation out;
  const int N = static_cast<int>(plan.inputs.size());
  if (static_cast<int>(plan.states.size()) != N + 1) {
    out.failure = "state/input count mismatch";
    return out;
  }

  WholeBodyConfig x = x0;
  for (int k = 0; k <= N; ++k) {
    const WholeBodyConfig& s = plan.states[k];
    const double res = (s.p - x.p).lpNorm<Eigen::Infinity>() +
                       (s.R - x.R).lpNorm<Eigen::Infinity>() +
                       (s.theta - x.theta).lpNorm<Eigen::Infinity>();
    out.max_dynamics_residual = std::max(out.max_dynamics_residual, res);
    out.max_orthonormality =
        std::max(out.max_orthonormality, orthonormality_error(s.R));
    if (k < N) x = wb_kinematics_step(x, plan.inputs[k], plan.dt);
  }
  if (out.max_dynamics_residual >= 1e-6) {
    out.failure = "dynamics residual";
    return out;
  }
  if (out.max_orthonormality > 1e-9) {
    out.failure = "rotation drift";
    return out;
  }

  const Vec3 u_hi(params.v_max, params.omega_max, params.theta_dot_max);
  for (const auto& u : plan.inputs) {
    if (u.v.lpNorm<Eigen::Infinity>() > u_hi(0) + 1e-9 ||
        u.omega.lpNorm<Eigen::Infinity>() > u_hi(1) + 1e-9 ||
        u.theta_dot.lpNorm<Eigen::Infinity>() > u_hi(2) + 1e-9) {
      out.failure = "input bounds";
      return out;
    }
  }

  for (int k = 1; k <= N; ++k) {
    const WholeBodyConfig& s = plan.states[k];
    if (!model.inside_limits(s.theta, 1e-9)) {
      out.failure = "joint polytope";
      return out;
    }
    if (!params.collision_enabled) continue;
    const auto ells = body_ellipsoids(s.p, s.R, s.theta, model, bodies);
    for (const auto& e : ells) {
      for (const auto& o : obstacles.ellipsoids) {
        out.min_certificate =
            std::min(out.min_certificate, minkowski_separation(e, o));
      }
    }
    if (obstacles.has_ground) {
      const auto spheres = body_spheres(s.p, s.R, s.theta, model, bodies);
      for (double c : ground_clearance(spheres, obstacles.ground_height)) {
        out.min_certificate = std::min(out.min_certificate, c);
      }
    }
    if (params.self_collision_pair && ells.size() >= 2) {
      out.min_certificate = std::min(
          out.min_certificate, minkowski_separation(ells.back(), ells.front()));
    }
  }
  if (params.collision_enabled &&
      out.min_certificate < params.margin - 1e-9) {
    out.failure = "certificate below margin";
    return out;
  }
  out.ok = true;
  return out;
}

NmpcPlanner::NmpcPlanner(ManipulatorModel model, BodyEllipsoidSet bodies,
                         NmpcParams params)
    : model_(std::move(model)),
      bodies_(std::move(bodies)),
      params_(std::move(params)) {
  bodies_plan_ = inflated_bodies(bodies_, params_.body_inflation);
}

TrajectoryPlan NmpcPlanner::solve(const WholeBodyConfig& x0,
                                  const std::vector<EeRef>& window,
                                  const ObstacleSet& obstacles, double stamp,
                                  bool shift_warm) {
  const int N = params_.horizon();
  if (static_cast<int>(window.size()) < N + 1) {
    throw std::invalid_argument("nmpc: reference window too short");
  }

  Transcription tr(model_, bodies_plan_, params_, window, obstacles, x0);

  NlpProblem prob;
  prob.n = tr.n();
  prob.objective = [&tr](const VecX& z, VecX* grad) {
    return tr.objective(z, grad);
  };
  prob.n_ineq = tr.n_ineq();
  if (prob.n_ineq > 0) {
    prob.ineq_constraints = [&tr](const VecX& z, VecX* g, MatX* J) {
      tr.inequalities(z, g, J);
    };
  }
  prob.n_residuals = tr.n_residuals();
  prob.residuals = [&tr](const VecX& z, VecX* r, MatX* J) {
    tr.residuals(z, r, J);
  };
  prob.objective_hessian = [&tr](const VecX& z, MatX* H) {
    tr.extra_hessian(z, H);
  };
  prob.lower_bounds = VecX(prob.n);
  prob.upper_bounds = VecX(prob.n);
  for (int k = 0; k < N; ++k) {
    prob.upper_bounds.segment<3>(9 * k).setConstant(params_.v_max);
    prob.upper_bounds.segment<3>(9 * k + 3).setConstant(params_.omega_max);
    prob.upper_bounds.segment<3>(9 * k + 6).setConstant(params_.theta_dot_max);
  }
  prob.lower_bounds = -prob.upper_bounds;
  prob.initial_guess = VecX::Zero(prob.n);
  prob.objective_hessian_diag = VecX(prob.n);
  for (int k = 0; k < N; ++k) {
    prob.objective_hessian_diag.segment<3>(9 * k).setConstant(2.0 * params_.r_v);
    prob.objective_hessian_diag.segment<3>(9 * k + 3).setConstant(
        2.0 * params_.r_omega);
    prob.objective_hessian_diag.segment<3>(9 * k + 6).setConstant(
        2.0 * params_.r_theta_dot);
  }

  NlpWarmStart warm;
  const int rpk = tr.rows_per_knot();
  if (warm_.valid && warm_.z.size() == prob.n) {
    warm = warm_;
    if (shift_warm) {
      // Shift decision blocks and inequality multipliers by one interval.
      for (int k = 0; k + 1 < N; ++k) {
        warm.z.segment<9>(9 * k) = warm_.z.segment<9>(9 * (k + 1));
      }
      if (rpk > 0 && warm_.lambda_ineq.size() == rpk * N) {
        for (int k = 0; k + 1 < N; ++k) {
          warm.lambda_ineq.segment(rpk * k, rpk) =
              warm_.lambda_ineq.segment(rpk * (k + 1), rpk);
        }
      }
    }
  }

  const NlpSolution sol =
      nlp_solve(prob, params_.nlp, warm_.valid ? &warm : nullptr);
  warm_ = sol.warm;

  TrajectoryPlan plan;
  plan.stamp = stamp;
  plan.dt = params_.dt;
  plan.states.resize(N + 1);
  plan.inputs.resize(N);
  WholeBodyConfig x = x0;
  plan.states[0] = x;
  for (int k = 0; k < N; ++k) {
    plan.inputs[k] = {sol.z.segment<3>(9 * k), sol.z.segment<3>(9 * k + 3),
                      sol.z.segment<3>(9 * k + 6)};
    x = wb_kinematics_step(x, plan.inputs[k], params_.dt);
    plan.states[k + 1] = x;
  }
  plan.status = sol.status;
  plan.wall_time_ms = sol.wall_time_ms;
  plan.iterations = sol.outer_iterations;
  plan.inner_iterations = sol.inner_iterations;

  // The independent validator is the quality gate: a receding-horizon plan
  // that satisfies every constraint family is executable even when the
  // optimizer ran out of its iteration budget before full stationarity.
  const PlanValidation val =
      validate_plan(plan, x0, obstacles, model_, bodies_plan_, params_);
  plan.min_certificate = val.min_certificate;
  plan.feasible = val.ok && sol.status != NlpStatus::NumericalFailure;
  return plan;
}

Setpoint plan_to_setpoints(const TrajectoryPlan& plan, double t, Vec3* theta_d,
                           Vec3* theta_dot_d) {
  const int N = static_cast<int>(plan.inputs.size());
  const double rel = t - plan.stamp;
  if (rel < -1e-9 || rel > plan.horizon() + 1e-9) {
    throw StalePlan("query " + std::to_string(t) + " outside plan horizon");
  }
  const double s = std::clamp(rel / plan.dt, 0.0, static_cast<double>(N) - 1e-12);
  const int k = std::min(static_cast<int>(s), N - 1);
  const double a = s - k;

  const WholeBodyConfig& lo = plan.states[k];
  const WholeBodyConfig& hi = plan.states[k + 1];

  Setpoint sp;
  sp.p_d = (1 - a) * lo.p + a * hi.p;
  sp.v_d = plan.inputs[k].v;
  sp.a_d = (k + 1 < N) ? Vec3((plan.inputs[k + 1].v - plan.inputs[k].v) / plan.dt)
                       : Vec3::Zero();
  sp.R_d = lo.R * exp_so3(a * log_so3(lo.R.transpose() * hi.R));
  sp.omega_d = plan.inputs[k].omega;
  sp.omega_dot_d =
      (k + 1 < N)
          ? Vec3((plan.inputs[k + 1].omega - plan.inputs[k].omega) / plan.dt)
          : Vec3::Zero();
  if (theta_d) *theta_d = (1 - a) * lo.theta + a * hi.theta;
  if (theta_dot_d) *theta_dot_d = plan.inputs[k].theta_dot;
  return sp;
}

void PlanBuffer::publish(std::shared_ptr<const TrajectoryPlan> plan) {
  std::lock_guard<std::mutex> lock(mutex_);
  plan_ = std::move(plan);
}

std::shared_ptr<const TrajectoryPlan> PlanBuffer::latest() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return plan_;
}

NmpcWorker::NmpcWorker(NmpcPlanner planner, PlanBuffer& buffer)
    : planner_(std::move(planner)), buffer_(buffer), thread_([this] { run(); }) {}

NmpcWorker::~NmpcWorker() { stop(); }

void NmpcWorker::request(Request r) {
  {
    std::lock_guard<std::mutex> lock(mutex_);
    pending_ = std::move(r);
  }
  cv_.notify_one();
}

int NmpcWorker::solves_completed() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return completed_;
}

void NmpcWorker::stop() {
  {
    std::lock_guard<std::mutex> lock(mutex_);
    stop_ = true;
  }
  cv_.notify_one();
  if (thread_.joinable()) thread_.join();
}

void NmpcWorker::run() {
  for (;;) {
    Request req;
    {
      std::unique_lock<std::mutex> lock(mutex_);
      cv_.wait(lock, [this] { return stop_ || pending_.has_value(); });
      if (stop_) return;
      req = std::move(*pending_);
      pending_.reset();
    }
    TrajectoryPlan plan =
        planner_.solve(req.x0, req.window, req.obstacles, req.stamp);
    if (plan.feasible) {
      buffer_.publish(std::make_shared<const TrajectoryPlan>(std::move(plan)));
    }
    {
      std::lock_guard<std::mutex> lock(mutex_);
      ++completed_;
    }
  }
}

}  // namespace oam
