#include "oam/robot_model.hpp"

#include <cmath>

namespace oam {

void PlantParams::validate() const {
  if (!(m > 0.0) || !(m_bar > 0.0)) throw std::invalid_argument("mass must be positive");
  Eigen::SelfAdjointEigenSolver<Mat3> es_true(J_b), es_nom(J_bar);
  if (es_true.eigenvalues().minCoeff() <= 0.0 || es_nom.eigenvalues().minCoeff() <= 0.0) {
    throw std::invalid_argument("inertia must be positive definite");
  }
}

void AllocationConfig::validate() const {
  if (!(L > 0.0) || !(k_f > 0.0)) throw std::invalid_argument("L, k_f must be positive");
  if ((W_diag.array() <= 0.0).any()) throw std::invalid_argument("W must be positive");
}

Mat6x12 allocation_matrix(const AllocationConfig& cfg) {
  const double c = std::cos(M_PI / 3.0);
  const double s = std::sin(M_PI / 3.0);
  const double L = cfg.L;
  const double kf = cfg.k_f;

  Eigen::Matrix<double, 6, 6> A1, A2;
  A1 << 0, -c, 0, -1, 0, -c,
        0, s, 0, 0, 0, -s,
        1, 0, 1, 0, 1, 0,
        -L * c, kf * c, -L, -kf, -L * c, kf * c,
        L * s, -kf * s, 0, 0, -L * s, kf * s,
        -kf, -L, kf, -L, -kf, -L;
  A2 << 0, c, 0, 1, 0, c,
        0, -s, 0, 0, 0, s,
        1, 0, 1, 0, 1, 0,
        L * c, kf * c, L, -kf, L * c, kf * c,
        -L * s, -kf * s, 0, 0, L * s, kf * s,
        kf, -L, -kf, -L, kf, -L;

  Mat6x12 A;
  A << A1, A2;
  return A;
}

ActuatorCommand allocate(const Wrench& wrench, const AllocationConfig& cfg) {
  const Mat6x12 A = allocation_matrix(cfg);
  const Eigen::Matrix<double, 6, 6> AWAt =
      A * cfg.W_diag.asDiagonal() * A.transpose();

  Eigen::JacobiSVD<Eigen::Matrix<double, 6, 6>> svd(AWAt, Eigen::ComputeFullU |
                                                              Eigen::ComputeFullV);
  const double smin = svd.singularValues().minCoeff();
  const double smax = svd.singularValues().maxCoeff();
  if (smin <= 0.0 || smax / smin > cfg.max_condition) {
    throw SingularAllocation("A W A^T condition number exceeds limit");
  }

  Vec6 w;
  w << wrench.force, wrench.torque;
  const Vec12 b = cfg.W_diag.asDiagonal() * A.transpose() * AWAt.ldlt().solve(w);

  ActuatorCommand cmd;
  for (int i = 0; i < 6; ++i) {
    const double bc = b(2 * i);
    const double bs = b(2 * i + 1);
    cmd.thrust(i) = std::sqrt(bc * bc + bs * bs);
    cmd.tilt(i) = std::atan2(bs, bc);
  }
  return cmd;
}

Vec12 actuator_b_vector(const ActuatorCommand& cmd) {
  Vec12 b;
  for (int i = 0; i < 6; ++i) {
    b(2 * i) = cmd.thrust(i) * std::cos(cmd.tilt(i));
    b(2 * i + 1) = cmd.thrust(i) * std::sin(cmd.tilt(i));
  }
  return b;
}

ManipulatorModel::ManipulatorModel() {
  VecX lower(3), upper(3);
  lower << -100.0, -120.0, -120.0;
  upper << 100.0, 120.0, 120.0;
  set_joint_box_limits(lower * M_PI / 180.0, upper * M_PI / 180.0);
}

void ManipulatorModel::set_joint_box_limits(const VecX& lower, const VecX& upper) {
  const int n = static_cast<int>(lower.size());
  A_theta.resize(2 * n, n);
  b_theta.resize(2 * n);
  A_theta.setZero();
  for (int i = 0; i < n; ++i) {
    A_theta(i, i) = 1.0;
    b_theta(i) = upper(i);
    A_theta(n + i, i) = -1.0;
    b_theta(n + i) = -lower(i);
  }
}

bool ManipulatorModel::inside_limits(const VecX& theta, double tol) const {
  return ((A_theta * theta - b_theta).array() <= tol).all();
}

RelativeKinematics forward_kinematics_relative(const VecX& theta,
                                               const ManipulatorModel& model) {
  RelativeKinematics out;
  const int n = model.joints();
  out.links.resize(n);
  out.joint_origins.resize(n);
  out.world_axes.resize(n);

  Vec3 p = model.mount_offset;
  Mat3 R = Mat3::Identity();
  for (int i = 0; i < n; ++i) {
    out.joint_origins[i] = p;
    out.world_axes[i] = R * model.joint_axes[i];
    R = R * exp_so3(model.joint_axes[i] * theta(i));
    out.links[i].p = p;
    out.links[i].R = R;
    p = p + R * Vec3(0.0, 0.0, model.link_lengths[i]);
  }
  out.ee.p = p;
  out.ee.R = R;
  return out;
}

FkResult forward_kinematics(const Vec3& p, const Mat3& R, const VecX& theta,
                            const ManipulatorModel& model) {
  const RelativeKinematics rel = forward_kinematics_relative(theta, model);
  FkResult out;
  out.links.resize(rel.links.size());
  for (size_t i = 0; i < rel.links.size(); ++i) {
    out.links[i].p = p + R * rel.links[i].p;
    out.links[i].R = R * rel.links[i].R;
  }
  out.ee.p = p + R * rel.ee.p;
  out.ee.R = R * rel.ee.R;
  return out;
}

void relative_jacobians(const VecX& theta, const ManipulatorModel& model,
                        MatX* J_v, MatX* J_omega) {
  const RelativeKinematics rel = forward_kinematics_relative(theta, model);
  const int n = model.joints();
  if (J_v) {
    J_v->resize(3, n);
    for (int i = 0; i < n; ++i) {
      J_v->col(i) = rel.world_axes[i].cross(rel.ee.p - rel.joint_origins[i]);
    }
  }
  if (J_omega) {
    J_omega->resize(3, n);
    for (int i = 0; i < n; ++i) {
      J_omega->col(i) = rel.world_axes[i];
    }
  }
}

BodyEllipsoidSet BodyEllipsoidSet::default_for(const ManipulatorModel& model) {
  BodyEllipsoidSet set;
  Body base;
  base.name = "base";
  base.link_index = 0;
  base.shape0 = Vec3(0.35 * 0.35, 0.35 * 0.35, 0.10 * 0.10).asDiagonal();
  base.ground_radius = 0.36;
  set.bodies.push_back(base);

  for (int i = 0; i < model.joints(); ++i) {
    Body link;
    link.name = "link" + std::to_string(i + 1);
    link.link_index = i + 1;
    const double half = 0.5 * model.link_lengths[i];
    const double r = 0.04;  // capsule-ish radius
    link.offset = Vec3(0.0, 0.0, half);
    link.shape0 = Vec3(r * r, r * r, (half + r) * (half + r)).asDiagonal();
    link.ground_radius = half + r;
    set.bodies.push_back(link);
  }
  return set;
}

void BodyEllipsoidSet::validate() const {
  for (const auto& b : bodies) {
    Eigen::SelfAdjointEigenSolver<Mat3> es(b.shape0);
    if (es.eigenvalues().minCoeff() <= 0.0) {
      throw std::invalid_argument("body shape matrix must be SPD: " + b.name);
    }
    if (b.ground_radius <= 0.0) {
      throw std::invalid_argument("ground radius must be positive: " + b.name);
    }
  }
}

std::vector<Ellipsoid> body_ellipsoids(const Vec3& p, const Mat3& R,
                                       const VecX& theta,
                                       const ManipulatorModel& model,
                                       const BodyEllipsoidSet& set) {
  const FkResult fk = forward_kinematics(p, R, theta, model);
  std::vector<Ellipsoid> out;
  out.reserve(set.bodies.size());
  for (const auto& b : set.bodies) {
    Ellipsoid e;
    Mat3 Rb;
    Vec3 origin;
    if (b.link_index == 0) {
      Rb = R;
      origin = p;
    } else {
      Rb = fk.links[b.link_index - 1].R;
      origin = fk.links[b.link_index - 1].p;
    }
    e.center = origin + Rb * b.offset;
    e.shape = Rb * b.shape0 * Rb.transpose();
    out.push_back(e);
  }
  return out;
}

BodyEllipsoidSet inflated_bodies(const BodyEllipsoidSet& set, double delta) {
  BodyEllipsoidSet out = set;
  for (auto& b : out.bodies) {
    b.shape0 = inflate_shape(b.shape0, delta);
    b.ground_radius += delta;
  }
  return out;
}

std::vector<BodySphere> body_spheres(const Vec3& p, const Mat3& R,
                                     const VecX& theta,
                                     const ManipulatorModel& model,
                                     const BodyEllipsoidSet& set) {
  const std::vector<Ellipsoid> ells = body_ellipsoids(p, R, theta, model, set);
  std::vector<BodySphere> out;
  out.reserve(ells.size());
  for (size_t i = 0; i < ells.size(); ++i) {
    out.push_back({ells[i].center, set.bodies[i].ground_radius});
  }
  return out;
}

}  // namespace oam
