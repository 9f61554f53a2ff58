#include "longreg/rigid.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/LU>
#include <Eigen/SVD>

#include "longreg/errors.hpp"

namespace longreg {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kLogAngleLimit = kPi - 1e-6;

Vec3 vee_antisymmetric(const Mat3& r) {
  return {r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1)};
}

// Rotation angle from the antisymmetric and symmetric parts; atan2 keeps full
// precision near 0 where acos((tr - 1) / 2) does not.
double rotation_angle(const Mat3& r) {
  const double s = 0.5 * vee_antisymmetric(r).norm();
  const double c = 0.5 * (r.trace() - 1.0);
  return std::atan2(s, c);
}

}  // namespace

Mat3 hat(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

bool is_valid_rotation(const Mat3& r, double tol) {
  if (!r.allFinite()) return false;
  const double ortho = (r.transpose() * r - Mat3::Identity()).norm();
  return ortho <= tol && std::abs(r.determinant() - 1.0) <= tol;
}

RigidTransform::RigidTransform() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}

RigidTransform::RigidTransform(const Mat3& rotation, const Vec3& translation)
    : rotation_(rotation), translation_(translation) {
  if (!is_valid_rotation(rotation_)) {
    throw Error(ErrorCode::InvalidTransform, "rotation is not orthonormal with det +1");
  }
  if (!translation_.allFinite()) {
    throw Error(ErrorCode::InvalidTransform, "translation is not finite");
  }
}

RigidTransform RigidTransform::from_matrix(const Mat4& m) {
  const Eigen::RowVector4d bottom = m.row(3);
  if ((bottom - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > 1e-12) {
    throw Error(ErrorCode::InvalidTransform, "homogeneous row must be [0 0 0 1]");
  }
  return {m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>()};
}

RigidTransform RigidTransform::from_translation(const Vec3& t) {
  return {Mat3::Identity(), t};
}

RigidTransform RigidTransform::from_axis_angle(const Vec3& axis, double angle_rad) {
  const double n = axis.norm();
  if (!(n > 0.0)) throw Error(ErrorCode::InvalidArgument, "rotation axis has zero length");
  return exp_se3({axis / n * angle_rad, Vec3::Zero()});
}

RigidTransform RigidTransform::about_center(const Mat3& rotation, const Vec3& center,
                                            const Vec3& translation) {
  return {rotation, center - rotation * center + translation};
}

Mat4 RigidTransform::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation_;
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

double RigidTransform::angle() const { return rotation_angle(rotation_); }

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  return {RigidTransform::Unchecked{}, a.rotation_ * b.rotation_,
          a.rotation_ * b.translation_ + a.translation_};
}

RigidTransform invert(const RigidTransform& t) {
  const Mat3 rt = t.rotation_.transpose();
  return {RigidTransform::Unchecked{}, rt, -(rt * t.translation_)};
}

Twist log_se3(const RigidTransform& t) {
  const Mat3& r = t.rotation();
  const Vec3 w = vee_antisymmetric(r);  // 2 sin(theta) n
  const double s = 0.5 * w.norm();
  const double c = 0.5 * (r.trace() - 1.0);
  const double theta = std::atan2(s, c);
  if (!(theta < kLogAngleLimit)) {
    throw Error(ErrorCode::AngleNearPi,
                "rotation angle " + std::to_string(theta) + " rad is too close to pi");
  }

  Vec3 omega;
  if (theta < 1e-8) {
    omega = 0.5 * (1.0 + theta * theta / 6.0) * w;
  } else if (c > -0.5) {
    omega = (theta / (2.0 * s)) * w;
  } else {
    // Beyond 2pi/3 the antisymmetric part shrinks with sin(theta); recover
    // the axis from (R + R^T)/2 - cos(theta) I = (1 - cos(theta)) n n^T.
    const Mat3 b = 0.5 * (r + r.transpose()) - c * Mat3::Identity();
    Eigen::Index k = 0;
    b.diagonal().maxCoeff(&k);
    Vec3 n = b.col(k) / std::sqrt(b(k, k) * (1.0 - c));
    n.normalize();
    if (n.dot(w) < 0.0) n = -n;
    omega = theta * n;
  }

  // V^{-1} = I - W/2 + d W^2 with d = (1 - (theta/2) cot(theta/2)) / theta^2.
  const double t2 = theta * theta;
  double d;
  if (theta < 1e-2) {
    d = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0 + t2 * t2 * t2 / 1209600.0;
  } else {
    const double half = 0.5 * theta;
    d = (1.0 - half * std::cos(half) / std::sin(half)) / t2;
  }
  const Mat3 wh = hat(omega);
  const Mat3 v_inv = Mat3::Identity() - 0.5 * wh + d * wh * wh;
  return {omega, v_inv * t.translation()};
}

RigidTransform exp_se3(const Twist& xi) {
  const double theta = xi.omega.norm();
  const double t2 = theta * theta;
  double a;
  double b;
  double c;
  if (theta == 0.0) {
    a = 1.0;
    b = 0.5;
    c = 1.0 / 6.0;
  } else {
    const double sh = std::sin(0.5 * theta);
    a = std::sin(theta) / theta;
    b = 2.0 * sh * sh / t2;
    if (theta < 1e-2) {
      c = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0 - t2 * t2 * t2 / 362880.0;
    } else {
      c = (theta - std::sin(theta)) / (t2 * theta);
    }
  }
  const Mat3 wh = hat(xi.omega);
  const Mat3 wh2 = wh * wh;
  const Mat3 r = Mat3::Identity() + a * wh + b * wh2;
  const Mat3 v = Mat3::Identity() + b * wh + c * wh2;
  return {RigidTransform::Unchecked{}, r, v * xi.nu};
}

RigidTransform sqrt_rigid(const RigidTransform& t) { return exp_se3(log_se3(t).scaled(0.5)); }

namespace {

void check_point_sets(const WeightedPointSet& moving, const WeightedPointSet& fixed) {
  const auto n = moving.points.size();
  if (moving.weights.size() != n || fixed.points.size() != n || fixed.weights.size() != n) {
    throw Error(ErrorCode::InvalidArgument, "point sets and weights must have equal lengths");
  }
}

double combined_weight(const WeightedPointSet& moving, const WeightedPointSet& fixed,
                       std::size_t i) {
  const double w = moving.weights[i] * fixed.weights[i];
  if (!(w >= 0.0) || !std::isfinite(w)) {
    throw Error(ErrorCode::InvalidArgument, "weights must be finite and non-negative");
  }
  return w;
}

}  // namespace

RigidTransform fit_weighted_rigid(const WeightedPointSet& moving, const WeightedPointSet& fixed) {
  check_point_sets(moving, fixed);
  const std::size_t n = moving.points.size();

  double total = 0.0;
  Vec3 mean_a = Vec3::Zero();
  Vec3 mean_b = Vec3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    const double w = combined_weight(moving, fixed, i);
    total += w;
    mean_a += w * moving.points[i];
    mean_b += w * fixed.points[i];
  }
  if (!(total >= 1e-12)) {
    throw Error(ErrorCode::ZeroWeight, "total weight below 1e-12");
  }
  mean_a /= total;
  mean_b /= total;

  Mat3 h = Mat3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    const double w = moving.weights[i] * fixed.weights[i];
    if (w == 0.0) continue;
    h += w * (fixed.points[i] - mean_b) * (moving.points[i] - mean_a).transpose();
  }

  const Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sv = svd.singularValues();
  if (!(sv(0) > 0.0) || sv(1) < 1e-10 * sv(0)) {
    throw Error(ErrorCode::DegenerateGeometry,
                "weighted points are collinear or coincident (singular values " +
                    std::to_string(sv(0)) + ", " + std::to_string(sv(1)) + ")");
  }

  Mat3 v = svd.matrixV();
  const Mat3& u = svd.matrixU();
  if ((v * u.transpose()).determinant() < 0.0) v.col(2) = -v.col(2);
  const Mat3 r = v * u.transpose();
  return {RigidTransform::Unchecked{}, r, mean_a - r * mean_b};
}

double weighted_fit_cost(const WeightedPointSet& moving, const WeightedPointSet& fixed,
                         const RigidTransform& t) {
  check_point_sets(moving, fixed);
  double cost = 0.0;
  for (std::size_t i = 0; i < moving.points.size(); ++i) {
    cost += combined_weight(moving, fixed, i) * (moving.points[i] - t(fixed.points[i])).squaredNorm();
  }
  return cost;
}

double rotation_error(const RigidTransform& a, const RigidTransform& b) {
  return rotation_angle(a.rotation().transpose() * b.rotation());
}

double translation_error(const RigidTransform& a, const RigidTransform& b) {
  return (a.translation() - b.translation()).norm();
}

}  // namespace longreg
