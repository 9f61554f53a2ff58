#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

namespace longreg {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

struct Twist;
struct WeightedPointSet;

/// Element of SE(3): p -> rotation * p + translation, in world millimetres.
///
/// Constructing from a matrix validates orthonormality and det = +1 to 1e-9
/// and throws ErrorCode::InvalidTransform otherwise. Results of the algebra
/// below are produced without re-validation.
class RigidTransform {
 public:
  RigidTransform();
  RigidTransform(const Mat3& rotation, const Vec3& translation);

  static RigidTransform identity() { return {}; }
  static RigidTransform from_matrix(const Mat4& m);
  static RigidTransform from_translation(const Vec3& t);
  /// Rotation by `angle_rad` about `axis` through the world origin.
  static RigidTransform from_axis_angle(const Vec3& axis, double angle_rad);
  /// Rotation about an arbitrary centre, then translation.
  static RigidTransform about_center(const Mat3& rotation, const Vec3& center,
                                     const Vec3& translation);

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }
  Mat4 matrix() const;

  Vec3 operator()(const Vec3& p) const { return rotation_ * p + translation_; }

  /// Rotation angle in [0, pi].
  double angle() const;

 private:
  struct Unchecked {};
  RigidTransform(Unchecked, const Mat3& rotation, const Vec3& translation)
      : rotation_(rotation), translation_(translation) {}

  friend RigidTransform compose(const RigidTransform&, const RigidTransform&);
  friend RigidTransform invert(const RigidTransform&);
  friend RigidTransform exp_se3(const Twist&);
  friend RigidTransform fit_weighted_rigid(const WeightedPointSet&,
                                           const WeightedPointSet&);

  Mat3 rotation_;
  Vec3 translation_;
};

/// Canonical coordinates of se(3). `omega` is the axis-angle vector (rad),
/// `nu` the translational generator (mm).
struct Twist {
  Vec3 omega = Vec3::Zero();
  Vec3 nu = Vec3::Zero();

  Twist scaled(double s) const { return {omega * s, nu * s}; }
};

struct WeightedPointSet {
  std::vector<Vec3> points;
  std::vector<double> weights;
};

/// Applies `b` first, then `a`.
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);
RigidTransform invert(const RigidTransform& t);

/// Principal logarithm. Throws AngleNearPi when the rotation angle is within
/// 1e-6 of pi.
Twist log_se3(const RigidTransform& t);
RigidTransform exp_se3(const Twist& xi);

/// exp(log(T) / 2): the unique square root with rotation angle below pi / 2.
RigidTransform sqrt_rigid(const RigidTransform& t);

/// Closed-form weighted rigid fit.
///
/// Returns the proper rigid T minimising sum_i w_i |a_i - T b_i|^2, where a_i
/// are `moving.points`, b_i are `fixed.points` and w_i is the product
/// moving.weights[i] * fixed.weights[i]. Callers holding already-combined
/// weights pass them on one side and ones on the other.
///
/// Throws ZeroWeight when sum w_i < 1e-12 and DegenerateGeometry when the
/// weighted cross-covariance has rank below two.
RigidTransform fit_weighted_rigid(const WeightedPointSet& moving, const WeightedPointSet& fixed);

/// sum_i w_i |a_i - T b_i|^2 with the same weight convention as the fit.
double weighted_fit_cost(const WeightedPointSet& moving, const WeightedPointSet& fixed,
                         const RigidTransform& t);

/// Angle (rad) of the relative rotation between two transforms.
double rotation_error(const RigidTransform& a, const RigidTransform& b);
/// Euclidean distance between translations (mm).
double translation_error(const RigidTransform& a, const RigidTransform& b);

/// Orthonormality / determinant residual used by the RigidTransform invariant.
bool is_valid_rotation(const Mat3& r, double tol = 1e-9);

Mat3 hat(const Vec3& v);

}  // namespace longreg
