#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "longreg/errors.hpp"
#include "longreg/rigid.hpp"
#include "longreg/rigid_io.hpp"

using namespace longreg;
using testing_util::kDeg;
using testing_util::random_rigid;

namespace {

Mat4 twist_matrix(const Twist& xi) {
  Mat4 m = Mat4::Zero();
  m.topLeftCorner<3, 3>() = hat(xi.omega);
  m.topRightCorner<3, 1>() = xi.nu;
  return m;
}

// Horn's unit-quaternion solution: the rotation is the top eigenvector of a
// symmetric 4x4 built from the weighted cross-covariance.
RigidTransform horn_fit(const std::vector<Vec3>& a, const std::vector<Vec3>& b, const std::vector<double>& w) {
  double wsum = 0;
  Vec3 ca = Vec3::Zero(), cb = Vec3::Zero();
  for (std::size_t i = 0; i < a.size(); ++i) {
    wsum += w[i];
    ca += w[i] * a[i];
    cb += w[i] * b[i];
  }
  ca /= wsum;
  cb /= wsum;
  Mat3 s = Mat3::Zero();
  for (std::size_t i = 0; i < a.size(); ++i) s += w[i] * (b[i] - cb) * (a[i] - ca).transpose();
  Eigen::Matrix4d n;
  n << s(0, 0) + s(1, 1) + s(2, 2), s(1, 2) - s(2, 1), s(2, 0) - s(0, 2), s(0, 1) - s(1, 0),
      s(1, 2) - s(2, 1), s(0, 0) - s(1, 1) - s(2, 2), s(0, 1) + s(1, 0), s(2, 0) + s(0, 2),
      s(2, 0) - s(0, 2), s(0, 1) + s(1, 0), -s(0, 0) + s(1, 1) - s(2, 2), s(1, 2) + s(2, 1),
      s(0, 1) - s(1, 0), s(2, 0) + s(0, 2), s(1, 2) + s(2, 1), -s(0, 0) - s(1, 1) + s(2, 2);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(n);
  const Eigen::Vector4d q = es.eigenvectors().col(3);
  const Mat3 r = Eigen::Quaterniond(q[0], q[1], q[2], q[3]).toRotationMatrix();
  return {r, ca - r * cb};
}

}  // namespace

TEST_CASE("construction validates the rotation") {
  Mat4 m = Mat4::Identity();
  m(0, 1) = 1e-3;
  CHECK_THROWS_AS(RigidTransform::from_matrix(m), Error);
  try {
    RigidTransform::from_matrix(m);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidTransform);
  }
  Mat4 reflect = Mat4::Identity();
  reflect(2, 2) = -1;
  CHECK_THROWS_AS(RigidTransform::from_matrix(reflect), Error);
  Mat4 bottom = Mat4::Identity();
  bottom(3, 0) = 0.5;
  CHECK_THROWS_AS(RigidTransform::from_matrix(bottom), Error);
  CHECK_NOTHROW(RigidTransform::from_matrix(Mat4::Identity()));
}

TEST_CASE("compose applies the right operand first and invert undoes it") {
  std::mt19937_64 g(1);
  for (int i = 0; i < 50; ++i) {
    const RigidTransform a = random_rigid(g, 3.0, 50.0);
    const RigidTransform b = random_rigid(g, 3.0, 50.0);
    const Vec3 p(1.5, -2.0, 7.0);
    CHECK((compose(a, b)(p) - a(b(p))).norm() < 1e-10);
    const RigidTransform id = compose(a, invert(a));
    CHECK((id.matrix() - Mat4::Identity()).norm() < 1e-12);
  }
}

TEST_CASE("exp matches the matrix exponential of the twist") {
  std::mt19937_64 g(2);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    Twist xi{Vec3(n(g), n(g), n(g)), Vec3(n(g), n(g), n(g)) * 20.0};
    if (xi.omega.norm() > 3.0) xi.omega *= 3.0 / xi.omega.norm();
    if (i % 10 == 0) xi.omega *= 1e-5;  // small-angle series branch
    const Mat4 oracle = twist_matrix(xi).exp();
    CHECK((exp_se3(xi).matrix() - oracle).norm() < 1e-10);
  }
}

TEST_CASE("log inverts exp and agrees with the matrix logarithm") {
  std::mt19937_64 g(3);
  for (int i = 0; i < 200; ++i) {
    const RigidTransform t = random_rigid(g, 3.0, 40.0);
    const Twist xi = log_se3(t);
    CHECK(xi.omega.norm() <= 3.0 + 1e-12);
    CHECK((exp_se3(xi).matrix() - t.matrix()).norm() < 1e-9);
    const Mat4 oracle = t.matrix().log();
    CHECK((twist_matrix(xi) - oracle).norm() < 1e-8);
  }
  CHECK(log_se3(RigidTransform::identity()).omega.norm() == 0.0);
  CHECK(log_se3(RigidTransform::identity()).nu.norm() == 0.0);
}

TEST_CASE("log near pi") {
  const Vec3 axis = Vec3(1, 2, 3).normalized();
  const double pi = 3.14159265358979323846;
  SUBCASE("rejects angles within 1e-6 of pi") {
    for (double gap : {0.0, 1e-9, 5e-7, 9.9e-7}) {
      const RigidTransform t = RigidTransform::from_axis_angle(axis, pi - gap);
      try {
        log_se3(t);
        FAIL("expected AngleNearPi for gap " << gap);
      } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::AngleNearPi);
      }
    }
  }
  SUBCASE("accepts angles just outside the band") {
    const RigidTransform t = {RigidTransform::from_axis_angle(axis, pi - 1e-4).rotation(), Vec3(1, 2, 3)};
    const Twist xi = log_se3(t);
    CHECK(std::abs(xi.omega.norm() - (pi - 1e-4)) < 1e-9);
    CHECK((exp_se3(xi).matrix() - t.matrix()).norm() < 1e-8);
  }
}

TEST_CASE("sqrt squares back to the original") {
  std::mt19937_64 g(4);
  for (int i = 0; i < 200; ++i) {
    const RigidTransform t = random_rigid(g, 3.0, 40.0);
    const RigidTransform h = sqrt_rigid(t);
    CHECK(h.angle() <= t.angle() / 2 + 1e-12);
    CHECK((compose(h, h).matrix() - t.matrix()).norm() < 1e-9);
    // the inverse's root is the root's inverse
    CHECK((sqrt_rigid(invert(t)).matrix() - invert(h).matrix()).norm() < 1e-9);
  }
}

TEST_CASE("weighted fit recovers an exact rigid relation") {
  std::mt19937_64 g(5);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  std::uniform_real_distribution<double> uw(0.1, 2.0);
  for (int trial = 0; trial < 100; ++trial) {
    const RigidTransform truth = random_rigid(g, 3.0, 30.0);
    WeightedPointSet moving, fixed;
    for (int i = 0; i < 4 + trial % 20; ++i) {
      const Vec3 b(u(g), u(g), u(g));
      fixed.points.push_back(b);
      moving.points.push_back(truth(b));
      fixed.weights.push_back(uw(g));
      moving.weights.push_back(uw(g));
    }
    const RigidTransform fit = fit_weighted_rigid(moving, fixed);
    CHECK(rotation_error(fit, truth) < 1e-9);
    CHECK(translation_error(fit, truth) < 1e-9);
  }
}

TEST_CASE("weighted fit agrees with the quaternion solution on noisy data") {
  std::mt19937_64 g(6);
  std::uniform_real_distribution<double> u(-40.0, 40.0);
  std::normal_distribution<double> noise(0.0, 2.0);
  std::uniform_real_distribution<double> uw(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const RigidTransform truth = random_rigid(g, 2.5, 20.0);
    WeightedPointSet moving, fixed;
    std::vector<double> w;
    for (int i = 0; i < 12; ++i) {
      const Vec3 b(u(g), u(g), u(g));
      fixed.points.push_back(b);
      moving.points.push_back(truth(b) + Vec3(noise(g), noise(g), noise(g)));
      moving.weights.push_back(uw(g));
      fixed.weights.push_back(uw(g));
      w.push_back(moving.weights.back() * fixed.weights.back());
    }
    const RigidTransform fit = fit_weighted_rigid(moving, fixed);
    const RigidTransform oracle = horn_fit(moving.points, fixed.points, w);
    CHECK(rotation_error(fit, oracle) < 1e-8);
    CHECK(translation_error(fit, oracle) < 1e-7);
    CHECK(weighted_fit_cost(moving, fixed, fit) <= weighted_fit_cost(moving, fixed, oracle) + 1e-9);
    CHECK(is_valid_rotation(fit.rotation()));
  }
}

TEST_CASE("weights enter the fit as a product") {
  std::mt19937_64 g(7);
  std::uniform_real_distribution<double> u(-30.0, 30.0);
  WeightedPointSet moving, fixed, combined, ones;
  for (int i = 0; i < 8; ++i) {
    const Vec3 b(u(g), u(g), u(g));
    fixed.points.push_back(b);
    moving.points.push_back(b + Vec3(u(g), u(g), u(g)) * 0.1);
    moving.weights.push_back(0.5 + i);
    fixed.weights.push_back(2.0 / (1 + i));
    combined.points.push_back(moving.points.back());
    combined.weights.push_back(moving.weights.back() * fixed.weights.back());
    ones.points.push_back(b);
    ones.weights.push_back(1.0);
  }
  const RigidTransform a = fit_weighted_rigid(moving, fixed);
  const RigidTransform b = fit_weighted_rigid(combined, ones);
  CHECK((a.matrix() - b.matrix()).norm() < 1e-12);
}

TEST_CASE("weighted fit rejects degenerate input") {
  WeightedPointSet moving, fixed;
  for (int i = 0; i < 5; ++i) {
    fixed.points.push_back(Vec3(i, 2.0 * i, -i));
    moving.points.push_back(Vec3(i, 2.0 * i, -i) + Vec3(1, 0, 0));
    fixed.weights.push_back(1.0);
    moving.weights.push_back(1.0);
  }
  try {
    fit_weighted_rigid(moving, fixed);
    FAIL("collinear points must not fit");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateGeometry);
  }
  fixed.points[1] = Vec3(0, 5, 0);
  moving.points[1] = Vec3(1, 5, 0);
  for (auto& w : moving.weights) w = 0.0;
  try {
    fit_weighted_rigid(moving, fixed);
    FAIL("zero weights must not fit");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ZeroWeight);
  }
}

TEST_CASE("planar point sets give a proper rotation") {
  // Coplanar points make the smallest singular value zero; the determinant
  // fix must not produce a reflection.
  const RigidTransform truth = RigidTransform::from_axis_angle(Vec3(0.3, -0.2, 0.9).normalized(), 40 * kDeg);
  WeightedPointSet moving, fixed;
  for (const Vec3& p : {Vec3(0, 0, 0), Vec3(10, 0, 0), Vec3(0, 10, 0), Vec3(10, 10, 0), Vec3(5, -3, 0)}) {
    fixed.points.push_back(p);
    moving.points.push_back(truth(p));
    fixed.weights.push_back(1.0);
    moving.weights.push_back(1.0);
  }
  const RigidTransform fit = fit_weighted_rigid(moving, fixed);
  CHECK(fit.rotation().determinant() > 0.0);
  CHECK(rotation_error(fit, truth) < 1e-9);
}

TEST_CASE("transform files round-trip exactly") {
  std::mt19937_64 g(8);
  for (int i = 0; i < 20; ++i) {
    const RigidTransform t = random_rigid(g, 3.0, 100.0);
    const RigidTransform back = parse_transform(format_transform(t, "note"));
    CHECK(back.matrix() == t.matrix());
  }
  testing_util::TempDir dir("rigid_io");
  const RigidTransform t = random_rigid(g, 1.0, 10.0);
  write_transform(dir / "t.txt", t);
  CHECK(read_transform(dir / "t.txt").matrix() == t.matrix());
}

TEST_CASE("malformed transform text is rejected") {
  auto code_of = [](const std::string& text) {
    try {
      parse_transform(text);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::Io;
  };
  CHECK(code_of("1 0 0 0\n0 1 0 0\n0 0 1 0\n") == ErrorCode::MalformedFile);
  CHECK(code_of("1 0 0 0\n0 1 0 0\n0 0 1 0\n0 0 0 1 5\n") == ErrorCode::MalformedFile);
  CHECK(code_of("1 0 0 0\n0 1 0 0\n0 0 1 x\n0 0 0 1\n") == ErrorCode::MalformedFile);
  CHECK(code_of("2 0 0 0\n0 1 0 0\n0 0 1 0\n0 0 0 1\n") == ErrorCode::InvalidTransform);
  CHECK_NOTHROW(parse_transform("# c\n1 0 0 0\n0 1 0 0\n\n0 0 1 0\n0 0 0 1\n"));
}
