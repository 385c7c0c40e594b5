#include "oam/geometry.hpp"

#include <cmath>

namespace oam {

namespace {
constexpr double kSmallAngle = 1e-8;
}

Mat3 hat(const Vec3& v) {
  Mat3 S;
  S << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
      -v.y(), v.x(), 0.0;
  return S;
}

Vec3 vee(const Mat3& S) {
  const double sym = (S + S.transpose()).norm();
  if (sym > 1e-9) {
    throw NonSkewInput("vee: input is not skew-symmetric, ||S + S^T|| = " +
                       std::to_string(sym));
  }
  return {S(2, 1), S(0, 2), S(1, 0)};
}

Mat3 exp_so3(const Vec3& v) {
  const double angle = v.norm();
  const Mat3 K = hat(v);
  if (angle <= kSmallAngle) {
    return Mat3::Identity() + K + 0.5 * K * K;
  }
  const double a = std::sin(angle) / angle;
  const double b = (1.0 - std::cos(angle)) / (angle * angle);
  return Mat3::Identity() + a * K + b * K * K;
}

Vec3 log_so3(const Mat3& R) {
  const double c = std::clamp(0.5 * (R.trace() - 1.0), -1.0, 1.0);
  const double angle = std::acos(c);
  if (angle < kSmallAngle) {
    // log(R) ~= skew part of R for near-identity rotations
    return Vec3(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1)) * 0.5;
  }
  if (angle > M_PI - 1e-6) {
    // Near pi the skew part degenerates; recover the axis from R + I.
    const Mat3 B = R + Mat3::Identity();
    int col = 0;
    B.colwise().norm().maxCoeff(&col);
    Vec3 axis = B.col(col).normalized();
    // Fix the sign so that exp matches R's skew part where it is nonzero.
    const Vec3 skew(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
    if (axis.dot(skew) < 0.0) axis = -axis;
    return angle * axis;
  }
  const Vec3 skew(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
  return 0.5 * angle / std::sin(angle) * skew;
}

Mat3 so3_right_jacobian(const Vec3& v) {
  const double angle = v.norm();
  const Mat3 K = hat(v);
  if (angle <= kSmallAngle) {
    return Mat3::Identity() - 0.5 * K + (1.0 / 6.0) * K * K;
  }
  const double a2 = angle * angle;
  const double b = (1.0 - std::cos(angle)) / a2;
  const double c = (angle - std::sin(angle)) / (a2 * angle);
  return Mat3::Identity() - b * K + c * K * K;
}

Mat3 so3_right_jacobian_inverse(const Vec3& v) {
  const double angle = v.norm();
  const Mat3 K = hat(v);
  if (angle <= kSmallAngle) {
    return Mat3::Identity() + 0.5 * K + (1.0 / 12.0) * K * K;
  }
  const double half = 0.5 * angle;
  const double cot = 1.0 / std::tan(half);
  const double c = (1.0 - half * cot) / (angle * angle);
  return Mat3::Identity() + 0.5 * K + c * K * K;
}

double orthonormality_error(const Mat3& R) {
  return (R.transpose() * R - Mat3::Identity()).norm();
}

bool is_rotation(const Mat3& R, double tol) {
  return orthonormality_error(R) <= tol && std::abs(R.determinant() - 1.0) <= tol;
}

Mat3 project_to_so3(const Mat3& R) {
  Eigen::JacobiSVD<Mat3> svd(R, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 U = svd.matrixU();
  Mat3 V = svd.matrixV();
  if ((U * V.transpose()).determinant() < 0.0) {
    U.col(2) *= -1.0;
  }
  return U * V.transpose();
}

AttitudeError attitude_error(const Mat3& R, const Mat3& R_d) {
  const Mat3 Q = R.transpose() * R_d;
  AttitudeError err;
  const Mat3 S = 0.5 * (Q - Q.transpose());
  err.e_R = Vec3(S(2, 1), S(0, 2), S(1, 0));
  err.psi = 0.5 * (Mat3::Identity() - Q).trace();
  return err;
}

double geodesic_distance(const Mat3& R, const Mat3& R_d) {
  const double c = std::clamp(((R.transpose() * R_d).trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c);
}

Mat3 error_c_matrix(const Mat3& R, const Mat3& R_d) {
  const Mat3 Q = R.transpose() * R_d;
  return 0.5 * (Q.trace() * Mat3::Identity() - Q);
}

Vec3 vee_skew(const Mat3& A) {
  const Mat3 S = 0.5 * (A - A.transpose());
  return {S(2, 1), S(0, 2), S(1, 0)};
}

Eigen::Vector4d rotation_to_quaternion_wxyz(const Mat3& R) {
  const Eigen::Quaterniond q(R);
  return {q.w(), q.x(), q.y(), q.z()};
}

}  // namespace oam
