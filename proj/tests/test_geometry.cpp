#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "oam/geometry.hpp"

using namespace oam;

namespace {

Mat3 rot_z(double a) {
  Mat3 R;
  R << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
  return R;
}

Mat3 random_rotation(std::mt19937& rng, double max_angle = M_PI) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vec3 v(u(rng), u(rng), u(rng));
  if (v.norm() < 1e-12) v = Vec3::UnitX();
  std::uniform_real_distribution<double> ua(0.0, max_angle);
  return exp_so3(v.normalized() * ua(rng));
}

}  // namespace

TEST_CASE("hat map matches the cross product") {
  Mat3 expected;
  expected << 0, -3, 2, 3, 0, -1, -2, 1, 0;
  CHECK((hat(Vec3(1, 2, 3)) - expected).norm() == doctest::Approx(0.0));
  CHECK(hat(Vec3::Zero()).norm() == 0.0);

  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int i = 0; i < 50; ++i) {
    const Vec3 v(u(rng), u(rng), u(rng)), w(u(rng), u(rng), u(rng));
    CHECK((hat(v) * w - v.cross(w)).norm() < 1e-14);
    CHECK((hat(v) + hat(v).transpose()).norm() == 0.0);
  }
}

TEST_CASE("vee inverts hat") {
  Mat3 S;
  S << 0, -3, 2, 3, 0, -1, -2, 1, 0;
  CHECK((vee(S) - Vec3(1, 2, 3)).norm() == 0.0);
  CHECK(vee(Mat3::Zero()).norm() == 0.0);

  const Vec3 v(0.3, -1.2, 7.0);
  CHECK((vee(hat(v)) - v).norm() == 0.0);

  Mat3 bad = S;
  bad(0, 1) += 1e-3;  // symmetric perturbation of size 1e-3
  CHECK_THROWS_AS(vee(bad), NonSkewInput);
}

TEST_CASE("exp_so3 closed form and identities") {
  const Mat3 Rz = exp_so3(Vec3(0, 0, M_PI / 2));
  Mat3 expected;
  expected << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  CHECK((Rz - expected).norm() < 1e-15);

  CHECK((exp_so3(Vec3::Zero()) - Mat3::Identity()).norm() == 0.0);

  const Vec3 v(0.1, 0.2, 0.3);
  CHECK((exp_so3(v) * exp_so3(-v) - Mat3::Identity()).norm() < 1e-15);

  // Small-angle branch continuity across the threshold.
  const Vec3 tiny(3e-9, -4e-9, 5e-9);
  CHECK((exp_so3(tiny) - exp_so3(tiny * (1 + 1e-3))).norm() < 1e-10);

  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    Vec3 axis(u(rng), u(rng), u(rng));
    axis.normalize();
    std::uniform_real_distribution<double> ua(0.0, 4 * M_PI);
    const Mat3 R = exp_so3(axis * ua(rng));
    CHECK(is_rotation(R, 1e-9));
  }
}

TEST_CASE("log_so3 inverts exp_so3 incl. near pi") {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    Vec3 axis(u(rng), u(rng), u(rng));
    axis.normalize();
    std::uniform_real_distribution<double> ua(0.0, M_PI - 1e-9);
    const Vec3 v = axis * ua(rng);
    CHECK((exp_so3(log_so3(exp_so3(v))) - exp_so3(v)).norm() < 1e-7);
  }
  // Exactly pi about z.
  const Mat3 R = exp_so3(Vec3(0, 0, M_PI));
  CHECK((exp_so3(log_so3(R)) - R).norm() < 1e-7);
}

TEST_CASE("right Jacobian matches its finite-difference definition") {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const double h = 1e-6;
  for (int trial = 0; trial < 20; ++trial) {
    const Vec3 v(u(rng), u(rng), u(rng));
    const Mat3 Jr = so3_right_jacobian(v);
    CHECK((so3_right_jacobian_inverse(v) * Jr - Mat3::Identity()).norm() < 1e-9);
    for (int j = 0; j < 3; ++j) {
      Vec3 dv = Vec3::Zero();
      dv(j) = h;
      const Mat3 lhs = exp_so3(v + dv);
      const Mat3 rhs = exp_so3(v) * exp_so3(Jr * dv);
      CHECK((lhs - rhs).norm() < 1e-10);
    }
  }
}

TEST_CASE("attitude error variables") {
  std::mt19937 rng(13);
  const Mat3 R = random_rotation(rng);
  const AttitudeError zero = attitude_error(R, R);
  CHECK(zero.e_R.norm() < 1e-15);
  CHECK(zero.psi == doctest::Approx(0.0).epsilon(1e-12));

  for (const double theta : {0.1, M_PI / 2, M_PI - 0.01}) {
    const AttitudeError e = attitude_error(Mat3::Identity(), rot_z(theta));
    CHECK(e.psi == doctest::Approx(1.0 - std::cos(theta)).epsilon(1e-12));
  }

  const AttitudeError e = attitude_error(Mat3::Identity(), rot_z(M_PI / 2));
  CHECK((e.e_R - Vec3(0, 0, 1)).norm() < 1e-15);

  // psi stays in [0, 2]
  for (int i = 0; i < 100; ++i) {
    const AttitudeError ei = attitude_error(random_rotation(rng), random_rotation(rng));
    CHECK(ei.psi >= 0.0);
    CHECK(ei.psi <= 2.0 + 1e-12);
  }
}

TEST_CASE("geodesic distance") {
  std::mt19937 rng(17);
  const Mat3 R = random_rotation(rng);
  CHECK(geodesic_distance(R, R) == doctest::Approx(0.0));
  CHECK(geodesic_distance(Mat3::Identity(), rot_z(0.5)) == doctest::Approx(0.5).epsilon(1e-12));

  // Rounding pushing the trace slightly above 3 must clamp, not NaN.
  const Mat3 inflated = (1.0 + 4e-13) * Mat3::Identity();
  const double d = geodesic_distance(Mat3::Identity(), inflated);
  CHECK(std::isfinite(d));
  CHECK(d == doctest::Approx(0.0));

  for (int i = 0; i < 100; ++i) {
    const Mat3 A = random_rotation(rng), B = random_rotation(rng);
    CHECK(geodesic_distance(A, B) == doctest::Approx(geodesic_distance(B, A)));
    CHECK(geodesic_distance(A, B) <= M_PI + 1e-12);
    if (geodesic_distance(A, B) < 1e-9) CHECK((A - B).norm() < 1e-7);
  }
}

TEST_CASE("error C matrix: value and spectral bound") {
  const Mat3 I = Mat3::Identity();
  CHECK((error_c_matrix(I, I) - I).norm() < 1e-15);

  auto spectral_norm = [](const Mat3& M) {
    return Eigen::JacobiSVD<Mat3>(M).singularValues().maxCoeff();
  };
  CHECK(spectral_norm(error_c_matrix(I, rot_z(M_PI))) <= 1.0 + 1e-12);

  std::mt19937 rng(19);
  for (int i = 0; i < 1000; ++i) {
    const Mat3 A = random_rotation(rng), B = random_rotation(rng);
    CHECK(spectral_norm(error_c_matrix(A, B)) <= 1.0 + 1e-12);
  }
}

TEST_CASE("de_R/dt equals C e_omega along a rotation trajectory") {
  const double dt = 1e-5;
  const int steps = 2000;
  Mat3 R = exp_so3(Vec3(0.2, -0.1, 0.4));
  Mat3 R_d = exp_so3(Vec3(-0.3, 0.2, 0.1));

  std::vector<Vec3> e_hist;
  std::vector<Vec3> ce_hist;
  for (int k = 0; k <= steps; ++k) {
    const double t = k * dt;
    const Vec3 omega(0.3 * std::sin(t), 0.2, -0.1 * std::cos(t));
    const Vec3 omega_d(0.1 * std::cos(t), -0.2 * std::sin(t), 0.15);
    e_hist.push_back(attitude_error(R, R_d).e_R);
    const Vec3 e_omega = R.transpose() * R_d * omega_d - omega;
    ce_hist.push_back(error_c_matrix(R, R_d) * e_omega);
    R = R * exp_so3(omega * dt);
    R_d = R_d * exp_so3(omega_d * dt);
  }
  double worst = 0.0;
  for (int k = 1; k + 1 < static_cast<int>(e_hist.size()); ++k) {
    const Vec3 fd = (e_hist[k + 1] - e_hist[k - 1]) / (2 * dt);
    worst = std::max(worst, (fd - ce_hist[k]).norm());
  }
  CHECK(worst < dt);  // agreement is first order in the step size
}

TEST_CASE("polar projection restores orthonormality") {
  std::mt19937 rng(23);
  std::uniform_real_distribution<double> u(-1e-6, 1e-6);
  for (int i = 0; i < 50; ++i) {
    Mat3 noisy = random_rotation(rng);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) noisy(r, c) += u(rng);
    const Mat3 fixed = project_to_so3(noisy);
    CHECK(is_rotation(fixed, 1e-12));
    CHECK((fixed - noisy).norm() < 1e-5);
  }
}

TEST_CASE("quaternion conversion is wxyz ordered") {
  const Eigen::Vector4d q = rotation_to_quaternion_wxyz(rot_z(M_PI / 2));
  CHECK(q(0) == doctest::Approx(std::cos(M_PI / 4)));
  CHECK(q(3) == doctest::Approx(std::sin(M_PI / 4)));
  CHECK(q(1) == doctest::Approx(0.0));
  CHECK(q(2) == doctest::Approx(0.0));
}
