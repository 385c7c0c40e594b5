#ifndef OAM_COLLISION_HPP_
#define OAM_COLLISION_HPP_

#include <vector>

#include "oam/geometry.hpp"

namespace oam {

// E(p, Q) = { x : (x - p)^T Q^{-1} (x - p) <= 1 }, Q symmetric positive definite.
struct Ellipsoid {
  Vec3 center = Vec3::Zero();
  Mat3 shape = Mat3::Identity();  // m^2

  // Axis-aligned construction from semi-axes, optionally rotated.
  static Ellipsoid from_semi_axes(const Vec3& center, const Vec3& semi_axes,
                                  const Mat3& R = Mat3::Identity());

  bool valid(double tol = 1e-12) const;
};

// Static environment: ellipsoid obstacles plus a ground half-space z >= ground_height.
struct ObstacleSet {
  std::vector<Ellipsoid> ellipsoids;
  double ground_height = 0.0;
  bool has_ground = true;
};

// h(p) = (p - c)^T Q^{-1} (p - c) - 1: positive outside, negative inside.
struct BarrierValue {
  double h = 0.0;
  Vec3 grad = Vec3::Zero();  // 2 Q^{-1} (p - c)
};

BarrierValue point_barrier(const Vec3& p, const Ellipsoid& obs);

// Barrier decay-rate form: h_tilde = grad(h) . v + gamma_rate * h.
// Keeping h_tilde > 0 with h(0) > 0 renders {h > 0} forward invariant.
double rate_barrier(const Vec3& p, const Vec3& v, const Ellipsoid& obs,
                    double gamma_rate);

// Shape matrix of the ellipsoid enclosing the Minkowski sum A (+) (-B):
// sum over the pair of Q_i / sqrt(tr Q_i) * sqrt(tr Q_j).
Mat3 minkowski_shape(const Ellipsoid& a, const Ellipsoid& b);

// h_hat = (c_A - c_B)^T Qbar^{-1} (c_A - c_B) - 1. Positive value certifies
// the two ellipsoids are disjoint; non-positive is inconclusive.
double minkowski_separation(const Ellipsoid& a, const Ellipsoid& b);

// Shape matrix with every semi-axis grown by delta (congruence-safe).
Mat3 inflate_shape(const Mat3& shape, double delta);

// Bounding sphere of a rigid body, used for the ground half-space constraint.
struct BodySphere {
  Vec3 center = Vec3::Zero();
  double radius = 0.0;
};

// Per-body clearance z_i - r_i - ground_height; all positive means ground-free.
std::vector<double> ground_clearance(const std::vector<BodySphere>& spheres,
                                     double ground_height);

// Sampling-based intersection oracle for tests: distributes points on the
// surface of each ellipsoid (Fibonacci sphere) and checks them against the
// other's quadratic form. Returns true if an intersecting point is found.
bool ellipsoids_intersect_sampled(const Ellipsoid& a, const Ellipsoid& b,
                                  int samples_per_body = 4096);

}  // namespace oam

#endif  // OAM_COLLISION_HPP_
