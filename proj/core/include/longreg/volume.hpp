#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "longreg/rigid.hpp"

namespace longreg {

using Dims = std::array<std::int64_t, 3>;

/// Voxel grid plus the affine taking voxel indices (x fastest) to world mm.
struct Geometry {
  Dims dims{1, 1, 1};
  Mat4 voxel_to_world = Mat4::Identity();

  std::int64_t voxel_count() const { return dims[0] * dims[1] * dims[2]; }
  std::int64_t index(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return i + dims[0] * (j + dims[1] * k);
  }

  Mat4 world_to_voxel() const;
  Vec3 to_world(const Vec3& ijk) const;
  Vec3 to_voxel(const Vec3& world) const;
  /// Column norms of the linear part (mm per voxel step).
  Vec3 spacing() const;
  /// World position of the grid centre, voxel ((n - 1) / 2, ...).
  Vec3 center() const;

  /// Throws InvalidArgument unless dims > 0 and the affine is invertible.
  void validate() const;

  /// RAS-aligned grid with the given spacing whose centre sits at `center`.
  static Geometry centered(const Dims& dims, double spacing_mm, const Vec3& center = Vec3::Zero());

  bool operator==(const Geometry& other) const = default;
};

bool same_geometry(const Geometry& a, const Geometry& b, double tol = 1e-6);

/// Scalar grid with value semantics; data stored x fastest.
template <typename T>
class Image {
 public:
  using value_type = T;

  Image() = default;
  explicit Image(Geometry geometry, T fill = T{});
  Image(Geometry geometry, std::vector<T> data);

  const Geometry& geometry() const { return geometry_; }
  const Dims& dims() const { return geometry_.dims; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

  std::span<const T> data() const { return data_; }
  std::span<T> data() { return data_; }

  T& operator[](std::int64_t idx) { return data_[static_cast<std::size_t>(idx)]; }
  T operator[](std::int64_t idx) const { return data_[static_cast<std::size_t>(idx)]; }
  T& at(std::int64_t i, std::int64_t j, std::int64_t k) { return (*this)[geometry_.index(i, j, k)]; }
  T at(std::int64_t i, std::int64_t j, std::int64_t k) const { return (*this)[geometry_.index(i, j, k)]; }

  bool operator==(const Image& other) const = default;

 private:
  Geometry geometry_;
  std::vector<T> data_;
};

using Volume = Image<float>;
using LabelMap = Image<std::int32_t>;

extern template class Image<float>;
extern template class Image<std::int32_t>;

/// Sorted distinct labels present in the map.
std::vector<std::int32_t> label_set(const LabelMap& labels);

/// Per-voxel world-space 3-vectors. The tag keeps velocities and
/// displacements from being mixed up.
template <typename Tag>
class VectorField {
 public:
  VectorField() = default;
  explicit VectorField(Geometry geometry)
      : geometry_(std::move(geometry)),
        vectors_(static_cast<std::size_t>(geometry_.voxel_count()), Vec3::Zero()) {}

  const Geometry& geometry() const { return geometry_; }
  std::span<const Vec3> vectors() const { return vectors_; }
  std::span<Vec3> vectors() { return vectors_; }
  Vec3& operator[](std::int64_t idx) { return vectors_[static_cast<std::size_t>(idx)]; }
  const Vec3& operator[](std::int64_t idx) const { return vectors_[static_cast<std::size_t>(idx)]; }

  /// Trilinear interpolation at a world point; outside the grid the border
  /// value is extended.
  Vec3 sample(const Vec3& world) const;
  /// Same, at continuous voxel coordinates.
  Vec3 sample_voxel(const Vec3& ijk) const;

  bool all_finite() const;

 private:
  Geometry geometry_;
  std::vector<Vec3> vectors_;
};

struct VelocityTag {};
struct DisplacementTag {};
using VelocityField = VectorField<VelocityTag>;
using DisplacementField = VectorField<DisplacementTag>;

extern template class VectorField<VelocityTag>;
extern template class VectorField<DisplacementTag>;

enum class Interpolation { Linear, Nearest };

/// Value of image samples that fall outside the grid.
enum class Padding {
  Zero,
  Border,  // nearest border voxel
};

/// Zero-padded trilinear interpolation at continuous voxel coordinates.
double sample_linear(const Volume& vol, double x, double y, double z);
/// Trilinear interpolation at a world point; 0 outside the grid.
double trilinear_sample(const Volume& vol, const Vec3& world);
/// Nearest voxel at a world point; background (0) outside the grid.
std::int32_t nearest_sample(const LabelMap& labels, const Vec3& world);

/// out(v) = vol(T * target.to_world(v)). Images use trilinear interpolation
/// (or nearest on request), label maps nearest neighbour.
Volume resample(const Volume& vol, const RigidTransform& t, const Geometry& target,
                Interpolation interp = Interpolation::Linear);
LabelMap resample(const LabelMap& labels, const RigidTransform& t, const Geometry& target);

/// out(v) = src(phi(R x)) with x = target.to_world(v), phi(y) = y + u(y):
/// the rigid map is applied first, then the nonlinear warp.
Volume warp(const Volume& src, const RigidTransform& r, const DisplacementField& u,
            const Geometry& target, Padding padding = Padding::Zero);
LabelMap warp(const LabelMap& src, const RigidTransform& r, const DisplacementField& u,
              const Geometry& target);

/// Resamples (m o T^{1/2}, f o T^{-1/2}) onto f's geometry, where T maps the
/// fixed domain onto the moving one. Propagates AngleNearPi.
std::pair<Volume, Volume> halfway_resample(const Volume& m, const Volume& f, const RigidTransform& t);
std::pair<LabelMap, LabelMap> halfway_resample(const LabelMap& m, const LabelMap& f,
                                               const RigidTransform& t);

/// Halves resolution: 2x2x2 box mean for images, majority vote for labels
/// (ties go to the smallest label). Odd trailing slabs are dropped.
Volume downsample2(const Volume& vol);
LabelMap downsample2(const LabelMap& labels);

/// Canonical LIA grid of `size`^3 voxels at `voxel_mm`, centred on the
/// source grid's world centre.
Geometry conform_geometry(const Geometry& source, std::int64_t size = 256, double voxel_mm = 1.0);

}  // namespace longreg
