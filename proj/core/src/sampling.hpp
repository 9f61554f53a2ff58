#pragma once

// Inner-loop helpers shared by resampling, the label loss and the refinement
// metrics. Not installed.

#include <cmath>
#include <cstdint>

#include "longreg/volume.hpp"

namespace longreg::detail {

/// Affine map from target voxel indices to source voxel coordinates.
struct VoxelMap {
  Mat3 linear = Mat3::Identity();
  Vec3 offset = Vec3::Zero();

  Vec3 operator()(double i, double j, double k) const { return linear * Vec3(i, j, k) + offset; }
};

inline VoxelMap voxel_map(const Geometry& source, const RigidTransform& t, const Geometry& target) {
  const Mat4 m = source.world_to_voxel() * t.matrix() * target.voxel_to_world;
  return {m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>()};
}

/// Calls fn(index, source_voxel) for every target voxel in storage order.
template <typename Fn>
void for_each_mapped(const Dims& target_dims, const VoxelMap& map, Fn&& fn) {
  const Vec3 step = map.linear.col(0);
  std::int64_t idx = 0;
  for (std::int64_t k = 0; k < target_dims[2]; ++k) {
    for (std::int64_t j = 0; j < target_dims[1]; ++j) {
      const Vec3 row = map(0.0, static_cast<double>(j), static_cast<double>(k));
      for (std::int64_t i = 0; i < target_dims[0]; ++i, ++idx) {
        fn(idx, Vec3(row + static_cast<double>(i) * step));
      }
    }
  }
}

/// Corner indices and weights of a trilinear stencil; corners outside the
/// grid get index -1.
struct Stencil {
  std::int64_t index[8];
  double weight[8];
};

inline bool make_stencil(const Dims& n, double x, double y, double z, Stencil& s) {
  if (!(std::isfinite(x) && std::isfinite(y) && std::isfinite(z))) return false;
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const double fz = std::floor(z);
  if (fx < -1.0 || fy < -1.0 || fz < -1.0 || fx >= static_cast<double>(n[0]) ||
      fy >= static_cast<double>(n[1]) || fz >= static_cast<double>(n[2])) {
    return false;
  }
  const auto x0 = static_cast<std::int64_t>(fx);
  const auto y0 = static_cast<std::int64_t>(fy);
  const auto z0 = static_cast<std::int64_t>(fz);
  const double dx = x - fx;
  const double dy = y - fy;
  const double dz = z - fz;
  int c = 0;
  for (int dk = 0; dk < 2; ++dk) {
    const std::int64_t zz = z0 + dk;
    const double wz = dk ? dz : 1.0 - dz;
    for (int dj = 0; dj < 2; ++dj) {
      const std::int64_t yy = y0 + dj;
      const double wy = dj ? dy : 1.0 - dy;
      for (int di = 0; di < 2; ++di, ++c) {
        const std::int64_t xx = x0 + di;
        const double wx = di ? dx : 1.0 - dx;
        const bool inside = xx >= 0 && yy >= 0 && zz >= 0 && xx < n[0] && yy < n[1] && zz < n[2];
        s.index[c] = inside ? xx + n[0] * (yy + n[1] * zz) : -1;
        s.weight[c] = wx * wy * wz;
      }
    }
  }
  return true;
}

/// Zero-padded trilinear interpolation on raw x-fastest data.
template <typename T>
inline double linear_at(const T* data, const Dims& n, double x, double y, double z) {
  if (!(std::isfinite(x) && std::isfinite(y) && std::isfinite(z))) return 0.0;
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const double fz = std::floor(z);
  const double dx = x - fx;
  const double dy = y - fy;
  const double dz = z - fz;
  if (fx >= 0.0 && fy >= 0.0 && fz >= 0.0 && fx + 1.0 < static_cast<double>(n[0]) &&
      fy + 1.0 < static_cast<double>(n[1]) && fz + 1.0 < static_cast<double>(n[2])) {
    const auto x0 = static_cast<std::int64_t>(fx);
    const auto y0 = static_cast<std::int64_t>(fy);
    const auto z0 = static_cast<std::int64_t>(fz);
    const std::int64_t sx = 1;
    const std::int64_t sy = n[0];
    const std::int64_t sz = n[0] * n[1];
    const T* p = data + x0 + sy * y0 + sz * z0;
    const double c00 = p[0] + dx * (static_cast<double>(p[sx]) - p[0]);
    const double c10 = p[sy] + dx * (static_cast<double>(p[sy + sx]) - p[sy]);
    const double c01 = p[sz] + dx * (static_cast<double>(p[sz + sx]) - p[sz]);
    const double c11 = p[sz + sy] + dx * (static_cast<double>(p[sz + sy + sx]) - p[sz + sy]);
    const double c0 = c00 + dy * (c10 - c00);
    const double c1 = c01 + dy * (c11 - c01);
    return c0 + dz * (c1 - c0);
  }
  Stencil s;
  if (!make_stencil(n, x, y, z, s)) return 0.0;
  double v = 0.0;
  for (int c = 0; c < 8; ++c) {
    if (s.index[c] >= 0) v += s.weight[c] * static_cast<double>(data[s.index[c]]);
  }
  return v;
}

/// Trilinear interpolation with coordinates clamped into the grid.
template <typename T>
inline double border_at(const T* data, const Dims& n, double x, double y, double z) {
  if (!(std::isfinite(x) && std::isfinite(y) && std::isfinite(z))) return 0.0;
  auto clamp = [](double v, std::int64_t size) {
    return v < 0.0 ? 0.0 : (v > static_cast<double>(size - 1) ? static_cast<double>(size - 1) : v);
  };
  return linear_at(data, n, clamp(x, n[0]), clamp(y, n[1]), clamp(z, n[2]));
}

template <typename T>
inline T nearest_at(const T* data, const Dims& n, double x, double y, double z) {
  if (!(std::isfinite(x) && std::isfinite(y) && std::isfinite(z))) return T{};
  const double rx = std::floor(x + 0.5);
  const double ry = std::floor(y + 0.5);
  const double rz = std::floor(z + 0.5);
  if (rx < 0.0 || ry < 0.0 || rz < 0.0 || rx >= static_cast<double>(n[0]) ||
      ry >= static_cast<double>(n[1]) || rz >= static_cast<double>(n[2])) {
    return T{};
  }
  return data[static_cast<std::int64_t>(rx) +
              n[0] * (static_cast<std::int64_t>(ry) + n[1] * static_cast<std::int64_t>(rz))];
}

}  // namespace longreg::detail
