#ifndef OAM_GEOMETRY_HPP_
#define OAM_GEOMETRY_HPP_

#include <Eigen/Dense>
#include <stdexcept>

namespace oam {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

struct NonSkewInput : std::runtime_error {
  explicit NonSkewInput(const std::string& what) : std::runtime_error(what) {}
};

// Matrix representation of the vector cross product: hat(v) * w == v x w.
Mat3 hat(const Vec3& v);

// Inverse of the hat map. Requires ||S + S^T||_F <= 1e-9.
Vec3 vee(const Mat3& S);

// Rodrigues closed form for ||v|| > eps, second-order Taylor below it.
Mat3 exp_so3(const Vec3& v);

// Principal logarithm, returns rotation vector with angle in [0, pi].
Vec3 log_so3(const Mat3& R);

// Right Jacobian of exp_so3: exp((v + d)^) ~= exp(v^) exp((Jr(v) d)^).
Mat3 so3_right_jacobian(const Vec3& v);
Mat3 so3_right_jacobian_inverse(const Vec3& v);

// Frobenius distance from orthonormality, ||R^T R - I||_F.
double orthonormality_error(const Mat3& R);

bool is_rotation(const Mat3& R, double tol = 1e-9);

// Nearest rotation matrix (polar decomposition via SVD).
Mat3 project_to_so3(const Mat3& R);

struct AttitudeError {
  Vec3 e_R;    // 0.5 * (R^T Rd - Rd^T R)^vee
  double psi;  // 0.5 * tr(I - R^T Rd), in [0, 2]
};

AttitudeError attitude_error(const Mat3& R, const Mat3& R_d);

// arccos((tr(R^T Rd) - 1) / 2), argument clamped to [-1, 1]. In [0, pi].
double geodesic_distance(const Mat3& R, const Mat3& R_d);

// C = 0.5 * [tr(R^T Rd) I - R^T Rd]; satisfies ||C||_2 <= 1 and
// d/dt e_R = C e_omega along any trajectory.
Mat3 error_c_matrix(const Mat3& R, const Mat3& R_d);

// vee of the skew part of A; tr(A b^) == -2 * vee_skew(A) . b.
Vec3 vee_skew(const Mat3& A);

// Quaternion [w, x, y, z] from a rotation matrix (telemetry only).
Eigen::Vector4d rotation_to_quaternion_wxyz(const Mat3& R);

}  // namespace oam

#endif  // OAM_GEOMETRY_HPP_
