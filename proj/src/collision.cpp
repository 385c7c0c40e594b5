#include "oam/collision.hpp"

#include <cmath>

namespace oam {

Ellipsoid Ellipsoid::from_semi_axes(const Vec3& center, const Vec3& semi_axes,
                                    const Mat3& R) {
  Ellipsoid e;
  e.center = center;
  const Mat3 D = semi_axes.cwiseProduct(semi_axes).asDiagonal();
  e.shape = R * D * R.transpose();
  return e;
}

bool Ellipsoid::valid(double tol) const {
  if ((shape - shape.transpose()).norm() > 1e-9) return false;
  Eigen::SelfAdjointEigenSolver<Mat3> es(shape);
  return es.eigenvalues().minCoeff() > tol;
}

BarrierValue point_barrier(const Vec3& p, const Ellipsoid& obs) {
  const Vec3 d = p - obs.center;
  const Vec3 Qinv_d = obs.shape.ldlt().solve(d);
  BarrierValue out;
  out.h = d.dot(Qinv_d) - 1.0;
  out.grad = 2.0 * Qinv_d;
  return out;
}

double rate_barrier(const Vec3& p, const Vec3& v, const Ellipsoid& obs,
                    double gamma_rate) {
  const BarrierValue b = point_barrier(p, obs);
  return b.grad.dot(v) + gamma_rate * b.h;
}

Mat3 minkowski_shape(const Ellipsoid& a, const Ellipsoid& b) {
  const double sa = std::sqrt(a.shape.trace());
  const double sb = std::sqrt(b.shape.trace());
  return (sa + sb) * (a.shape / sa + b.shape / sb);
}

double minkowski_separation(const Ellipsoid& a, const Ellipsoid& b) {
  const Vec3 d = a.center - b.center;
  const Mat3 Qbar = minkowski_shape(a, b);
  return d.dot(Qbar.ldlt().solve(d)) - 1.0;
}

Mat3 inflate_shape(const Mat3& shape, double delta) {
  Eigen::SelfAdjointEigenSolver<Mat3> es(shape);
  const Vec3 semi = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().array() + delta;
  return es.eigenvectors() * semi.cwiseProduct(semi).asDiagonal() *
         es.eigenvectors().transpose();
}

std::vector<double> ground_clearance(const std::vector<BodySphere>& spheres,
                                     double ground_height) {
  std::vector<double> out;
  out.reserve(spheres.size());
  for (const auto& s : spheres) {
    out.push_back(s.center.z() - s.radius - ground_height);
  }
  return out;
}

namespace {

// Fibonacci lattice on the unit sphere.
Vec3 fibonacci_direction(int i, int n) {
  const double golden = (1.0 + std::sqrt(5.0)) / 2.0;
  const double z = 1.0 - 2.0 * (i + 0.5) / n;
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  const double phi = 2.0 * M_PI * i / golden;
  return {r * std::cos(phi), r * std::sin(phi), z};
}

bool surface_hits(const Ellipsoid& src, const Ellipsoid& dst, int n) {
  Eigen::SelfAdjointEigenSolver<Mat3> es(src.shape);
  const Mat3 sqrtQ = es.operatorSqrt();
  const Mat3 dst_inv = dst.shape.inverse();
  for (int i = 0; i < n; ++i) {
    const Vec3 p = src.center + sqrtQ * fibonacci_direction(i, n);
    const Vec3 d = p - dst.center;
    if (d.dot(dst_inv * d) <= 1.0) return true;
  }
  return false;
}

}  // namespace

bool ellipsoids_intersect_sampled(const Ellipsoid& a, const Ellipsoid& b,
                                  int samples_per_body) {
  // Containment check: either center inside the other body.
  if (point_barrier(a.center, b).h <= 0.0) return true;
  if (point_barrier(b.center, a).h <= 0.0) return true;
  return surface_hits(a, b, samples_per_body) || surface_hits(b, a, samples_per_body);
}

}  // namespace oam
