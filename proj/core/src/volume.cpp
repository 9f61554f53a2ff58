#include "longreg/volume.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include <Eigen/LU>

#include "longreg/errors.hpp"
#include "sampling.hpp"

namespace longreg {

Mat4 Geometry::world_to_voxel() const { return voxel_to_world.inverse(); }

Vec3 Geometry::to_world(const Vec3& ijk) const {
  return voxel_to_world.topLeftCorner<3, 3>() * ijk + voxel_to_world.topRightCorner<3, 1>();
}

Vec3 Geometry::to_voxel(const Vec3& world) const {
  const Mat4 inv = world_to_voxel();
  return inv.topLeftCorner<3, 3>() * world + inv.topRightCorner<3, 1>();
}

Vec3 Geometry::spacing() const { return voxel_to_world.topLeftCorner<3, 3>().colwise().norm(); }

Vec3 Geometry::center() const {
  return to_world(Vec3(0.5 * static_cast<double>(dims[0] - 1), 0.5 * static_cast<double>(dims[1] - 1),
                       0.5 * static_cast<double>(dims[2] - 1)));
}

void Geometry::validate() const {
  for (auto d : dims) {
    if (d <= 0) throw Error(ErrorCode::InvalidArgument, "grid dimensions must be positive");
  }
  if (!voxel_to_world.allFinite() ||
      !(std::abs(voxel_to_world.topLeftCorner<3, 3>().determinant()) > 1e-12)) {
    throw Error(ErrorCode::InvalidArgument, "voxel-to-world affine is singular");
  }
}

Geometry Geometry::centered(const Dims& dims, double spacing_mm, const Vec3& center) {
  Geometry g;
  g.dims = dims;
  g.voxel_to_world = Mat4::Identity();
  g.voxel_to_world.topLeftCorner<3, 3>() *= spacing_mm;
  for (int a = 0; a < 3; ++a) {
    g.voxel_to_world(a, 3) = center[a] - 0.5 * spacing_mm * static_cast<double>(dims[a] - 1);
  }
  g.validate();
  return g;
}

bool same_geometry(const Geometry& a, const Geometry& b, double tol) {
  return a.dims == b.dims && (a.voxel_to_world - b.voxel_to_world).cwiseAbs().maxCoeff() <= tol;
}

template <typename T>
Image<T>::Image(Geometry geometry, T fill) : geometry_(std::move(geometry)) {
  geometry_.validate();
  data_.assign(static_cast<std::size_t>(geometry_.voxel_count()), fill);
}

template <typename T>
Image<T>::Image(Geometry geometry, std::vector<T> data)
    : geometry_(std::move(geometry)), data_(std::move(data)) {
  geometry_.validate();
  if (static_cast<std::int64_t>(data_.size()) != geometry_.voxel_count()) {
    throw Error(ErrorCode::InvalidArgument, "data length " + std::to_string(data_.size()) +
                                                " does not match grid of " +
                                                std::to_string(geometry_.voxel_count()) + " voxels");
  }
}

template class Image<float>;
template class Image<std::int32_t>;

std::vector<std::int32_t> label_set(const LabelMap& labels) {
  std::vector<std::int32_t> out(labels.data().begin(), labels.data().end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

template <typename Tag>
Vec3 VectorField<Tag>::sample_voxel(const Vec3& ijk) const {
  const Dims& n = geometry_.dims;
  double c[3];
  std::int64_t lo[3];
  double frac[3];
  for (int a = 0; a < 3; ++a) {
    c[a] = std::clamp(ijk[a], 0.0, static_cast<double>(n[a] - 1));
    const double f = std::floor(c[a]);
    lo[a] = std::min<std::int64_t>(static_cast<std::int64_t>(f), std::max<std::int64_t>(n[a] - 2, 0));
    frac[a] = c[a] - static_cast<double>(lo[a]);
  }
  Vec3 out = Vec3::Zero();
  for (int dk = 0; dk < 2; ++dk) {
    const double wz = dk ? frac[2] : 1.0 - frac[2];
    const std::int64_t z = std::min(lo[2] + dk, n[2] - 1);
    for (int dj = 0; dj < 2; ++dj) {
      const double wy = dj ? frac[1] : 1.0 - frac[1];
      const std::int64_t y = std::min(lo[1] + dj, n[1] - 1);
      for (int di = 0; di < 2; ++di) {
        const double w = (di ? frac[0] : 1.0 - frac[0]) * wy * wz;
        if (w == 0.0) continue;
        const std::int64_t x = std::min(lo[0] + di, n[0] - 1);
        out += w * vectors_[static_cast<std::size_t>(geometry_.index(x, y, z))];
      }
    }
  }
  return out;
}

template <typename Tag>
Vec3 VectorField<Tag>::sample(const Vec3& world) const {
  return sample_voxel(geometry_.to_voxel(world));
}

template <typename Tag>
bool VectorField<Tag>::all_finite() const {
  return std::all_of(vectors_.begin(), vectors_.end(), [](const Vec3& v) { return v.allFinite(); });
}

template class VectorField<VelocityTag>;
template class VectorField<DisplacementTag>;

double sample_linear(const Volume& vol, double x, double y, double z) {
  return detail::linear_at(vol.data().data(), vol.dims(), x, y, z);
}

double trilinear_sample(const Volume& vol, const Vec3& world) {
  const Vec3 v = vol.geometry().to_voxel(world);
  return sample_linear(vol, v.x(), v.y(), v.z());
}

std::int32_t nearest_sample(const LabelMap& labels, const Vec3& world) {
  const Vec3 v = labels.geometry().to_voxel(world);
  return detail::nearest_at(labels.data().data(), labels.dims(), v.x(), v.y(), v.z());
}

Volume resample(const Volume& vol, const RigidTransform& t, const Geometry& target,
                Interpolation interp) {
  Volume out(target);
  const auto map = detail::voxel_map(vol.geometry(), t, target);
  const float* src = vol.data().data();
  const Dims& n = vol.dims();
  auto dst = out.data();
  if (interp == Interpolation::Linear) {
    detail::for_each_mapped(target.dims, map, [&](std::int64_t idx, const Vec3& p) {
      dst[static_cast<std::size_t>(idx)] = static_cast<float>(detail::linear_at(src, n, p.x(), p.y(), p.z()));
    });
  } else {
    detail::for_each_mapped(target.dims, map, [&](std::int64_t idx, const Vec3& p) {
      dst[static_cast<std::size_t>(idx)] = detail::nearest_at(src, n, p.x(), p.y(), p.z());
    });
  }
  return out;
}

LabelMap resample(const LabelMap& labels, const RigidTransform& t, const Geometry& target) {
  LabelMap out(target);
  const auto map = detail::voxel_map(labels.geometry(), t, target);
  const std::int32_t* src = labels.data().data();
  const Dims& n = labels.dims();
  auto dst = out.data();
  detail::for_each_mapped(target.dims, map, [&](std::int64_t idx, const Vec3& p) {
    dst[static_cast<std::size_t>(idx)] = detail::nearest_at(src, n, p.x(), p.y(), p.z());
  });
  return out;
}

namespace {

// Source voxel coordinate of phi(R x) for each target voxel.
template <typename Fn>
void for_each_warped(const Geometry& src_geom, const RigidTransform& r, const DisplacementField& u,
                     const Geometry& target, Fn&& fn) {
  const Mat4 src_inv = src_geom.world_to_voxel();
  const Mat3 src_lin = src_inv.topLeftCorner<3, 3>();
  const Vec3 src_off = src_inv.topRightCorner<3, 1>();
  const Mat4 u_inv = u.geometry().world_to_voxel();
  const Mat3 u_lin = u_inv.topLeftCorner<3, 3>();
  const Vec3 u_off = u_inv.topRightCorner<3, 1>();
  const Mat4 to_src_world = r.matrix() * target.voxel_to_world;
  const detail::VoxelMap world_map{to_src_world.topLeftCorner<3, 3>(), to_src_world.topRightCorner<3, 1>()};
  detail::for_each_mapped(target.dims, world_map, [&](std::int64_t idx, const Vec3& y) {
    const Vec3 z = y + u.sample_voxel(u_lin * y + u_off);
    fn(idx, Vec3(src_lin * z + src_off));
  });
}

}  // namespace

Volume warp(const Volume& src, const RigidTransform& r, const DisplacementField& u, const Geometry& target,
            Padding padding) {
  Volume out(target);
  auto dst = out.data();
  const float* data = src.data().data();
  for_each_warped(src.geometry(), r, u, target, [&](std::int64_t idx, const Vec3& p) {
    dst[static_cast<std::size_t>(idx)] = static_cast<float>(
        padding == Padding::Zero ? detail::linear_at(data, src.dims(), p.x(), p.y(), p.z())
                                 : detail::border_at(data, src.dims(), p.x(), p.y(), p.z()));
  });
  return out;
}

LabelMap warp(const LabelMap& src, const RigidTransform& r, const DisplacementField& u,
              const Geometry& target) {
  LabelMap out(target);
  auto dst = out.data();
  for_each_warped(src.geometry(), r, u, target, [&](std::int64_t idx, const Vec3& p) {
    dst[static_cast<std::size_t>(idx)] = detail::nearest_at(src.data().data(), src.dims(), p.x(), p.y(), p.z());
  });
  return out;
}

std::pair<Volume, Volume> halfway_resample(const Volume& m, const Volume& f, const RigidTransform& t) {
  const RigidTransform half = sqrt_rigid(t);
  return {resample(m, half, f.geometry()), resample(f, invert(half), f.geometry())};
}

std::pair<LabelMap, LabelMap> halfway_resample(const LabelMap& m, const LabelMap& f,
                                               const RigidTransform& t) {
  const RigidTransform half = sqrt_rigid(t);
  return {resample(m, half, f.geometry()), resample(f, invert(half), f.geometry())};
}

namespace {

Geometry halved_geometry(const Geometry& g) {
  for (auto d : g.dims) {
    if (d < 2) throw Error(ErrorCode::InvalidArgument, "cannot downsample a grid thinner than 2 voxels");
  }
  Geometry out;
  out.dims = {g.dims[0] / 2, g.dims[1] / 2, g.dims[2] / 2};
  // New voxel v covers old voxels 2v and 2v+1, so its centre is old 2v + 0.5.
  Mat4 scale = Mat4::Identity();
  scale.topLeftCorner<3, 3>() *= 2.0;
  scale.topRightCorner<3, 1>() = Vec3::Constant(0.5);
  out.voxel_to_world = g.voxel_to_world * scale;
  return out;
}

template <typename T, typename Reduce>
Image<T> downsample_blocks(const Image<T>& in, Reduce&& reduce) {
  const Geometry g = halved_geometry(in.geometry());
  Image<T> out(g);
  T block[8];
  for (std::int64_t k = 0; k < g.dims[2]; ++k) {
    for (std::int64_t j = 0; j < g.dims[1]; ++j) {
      for (std::int64_t i = 0; i < g.dims[0]; ++i) {
        int c = 0;
        for (int dk = 0; dk < 2; ++dk)
          for (int dj = 0; dj < 2; ++dj)
            for (int di = 0; di < 2; ++di) block[c++] = in.at(2 * i + di, 2 * j + dj, 2 * k + dk);
        out.at(i, j, k) = reduce(block);
      }
    }
  }
  return out;
}

}  // namespace

Volume downsample2(const Volume& vol) {
  return downsample_blocks(vol, [](const float* b) {
    double s = 0.0;
    for (int c = 0; c < 8; ++c) s += b[c];
    return static_cast<float>(s / 8.0);
  });
}

LabelMap downsample2(const LabelMap& labels) {
  return downsample_blocks(labels, [](const std::int32_t* b) {
    std::int32_t sorted[8];
    std::copy(b, b + 8, sorted);
    std::sort(sorted, sorted + 8);
    std::int32_t best = sorted[0];
    int best_count = 0;
    for (int c = 0; c < 8;) {
      int e = c;
      while (e < 8 && sorted[e] == sorted[c]) ++e;
      if (e - c > best_count) {
        best_count = e - c;
        best = sorted[c];
      }
      c = e;
    }
    return best;
  });
}

Geometry conform_geometry(const Geometry& source, std::int64_t size, double voxel_mm) {
  if (size <= 0 || !(voxel_mm > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "conform size and voxel size must be positive");
  }
  // LIA: +i towards Left (-x), +j towards Inferior (-z), +k towards Anterior (+y).
  Mat3 dir;
  dir << -1, 0, 0,
          0, 0, 1,
          0, -1, 0;
  Geometry g;
  g.dims = {size, size, size};
  g.voxel_to_world = Mat4::Identity();
  g.voxel_to_world.topLeftCorner<3, 3>() = dir * voxel_mm;
  const Vec3 mid = Vec3::Constant(0.5 * static_cast<double>(size - 1));
  g.voxel_to_world.topRightCorner<3, 1>() = source.center() - dir * voxel_mm * mid;
  return g;
}

}  // namespace longreg
