#include "longreg/phantom.hpp"

#include <array>
#include <map>

#include "longreg/errors.hpp"
#include "longreg/filters.hpp"

namespace longreg {

namespace {

struct Ellipsoid {
  Vec3 center;
  Vec3 radii;

  // <= 1 inside.
  double level(const Vec3& q) const { return (q - center).cwiseQuotient(radii).squaredNorm(); }
  bool contains(const Vec3& q) const { return level(q) <= 1.0; }
};

// Paired structure: left copy at x < 0, right copy mirrored with a small
// offset and size change.
struct Nucleus {
  std::int32_t left;
  std::int32_t right;
  Vec3 center;  // left side
  Vec3 radii;
};

const std::array<Nucleus, 7> kNuclei = {{
    {4, 43, {-0.10, 0.06, 0.16}, {0.07, 0.26, 0.08}},    // lateral ventricle
    {17, 53, {-0.28, -0.15, -0.12}, {0.06, 0.16, 0.06}},  // hippocampus
    {18, 54, {-0.26, 0.06, -0.12}, {0.05, 0.05, 0.05}},   // amygdala
    {10, 49, {-0.10, -0.08, 0.02}, {0.08, 0.10, 0.08}},   // thalamus
    {11, 50, {-0.17, 0.19, 0.13}, {0.05, 0.12, 0.07}},    // caudate
    {12, 51, {-0.28, 0.05, 0.03}, {0.05, 0.13, 0.08}},    // putamen
    {13, 52, {-0.20, 0.03, 0.00}, {0.035, 0.07, 0.05}},   // pallidum
}};

std::int32_t label_at(const Vec3& q) {
  const bool right = q.x() > 0.0;

  const Ellipsoid cerebellum{{0.0, -0.45, -0.33}, {right ? 0.40 : 0.43, 0.22, 0.18}};
  const Ellipsoid brainstem{{0.0, -0.14, -0.30}, {0.10, 0.10, 0.32}};
  const Ellipsoid fourth{{0.0, -0.27, -0.27}, {0.035, 0.04, 0.04}};
  const Ellipsoid third{{0.0, -0.02, 0.05}, {0.03, 0.10, 0.05}};
  const Ellipsoid cerebrum{{right ? 0.01 : 0.0, 0.05, 0.12}, {right ? 0.54 : 0.56, 0.66, 0.45}};
  const Ellipsoid white{cerebrum.center, cerebrum.radii - Vec3::Constant(0.12)};
  const Ellipsoid csf{cerebrum.center, cerebrum.radii * 1.08};

  if (third.contains(q)) return 14;
  if (fourth.contains(q)) return 15;
  for (const auto& n : kNuclei) {
    // The right copy sits slightly forward and is 6% larger.
    const Ellipsoid e = right ? Ellipsoid{{-n.center.x(), n.center.y() + 0.02, n.center.z()}, n.radii * 1.06}
                              : Ellipsoid{n.center, n.radii};
    if (e.contains(q)) return right ? n.right : n.left;
  }
  if (brainstem.contains(q)) return 16;
  if (cerebrum.contains(q)) {
    if (std::abs(q.x()) < 0.03) return 24;
    if (white.contains(q)) return right ? 41 : 2;
    return right ? 42 : 3;
  }
  if (cerebellum.contains(q)) {
    const Ellipsoid core{cerebellum.center, cerebellum.radii * 0.55};
    if (core.contains(q)) return right ? 46 : 7;
    return right ? 47 : 8;
  }
  if (csf.contains(q)) return 24;
  return 0;
}

}  // namespace

LabelMap make_brain_phantom(std::int64_t size, double voxel_mm) {
  if (size < 8 || !(voxel_mm > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "phantom needs size >= 8 and a positive voxel size");
  }
  const Geometry g = Geometry::centered({size, size, size}, voxel_mm);
  const double unit = 1.15 * 0.5 * static_cast<double>(size) * voxel_mm;
  LabelMap out(g);
  std::int64_t idx = 0;
  for (std::int64_t k = 0; k < size; ++k) {
    for (std::int64_t j = 0; j < size; ++j) {
      for (std::int64_t i = 0; i < size; ++i, ++idx) {
        const Vec3 w = g.to_world(Vec3(static_cast<double>(i), static_cast<double>(j), static_cast<double>(k)));
        out[idx] = label_at(w / unit);
      }
    }
  }
  return out;
}

Volume make_smooth_phantom(std::int64_t size, double voxel_mm, double blur_mm) {
  static const std::map<std::int32_t, float> kIntensity = {
      {0, 0.0f},   {2, 0.85f},  {3, 0.55f},  {4, 0.15f},  {7, 0.8f},   {8, 0.5f},   {10, 0.7f},
      {11, 0.6f},  {12, 0.65f}, {13, 0.75f}, {14, 0.15f}, {15, 0.15f}, {16, 0.7f},  {17, 0.5f},
      {18, 0.52f}, {24, 0.2f},  {41, 0.85f}, {42, 0.55f}, {43, 0.15f}, {46, 0.8f},  {47, 0.5f},
      {49, 0.7f},  {50, 0.6f},  {51, 0.65f}, {52, 0.75f}, {53, 0.5f},  {54, 0.52f},
  };
  const LabelMap labels = make_brain_phantom(size, voxel_mm);
  Volume img(labels.geometry());
  for (std::int64_t i = 0; i < labels.size(); ++i) img[i] = kIntensity.at(labels[i]);
  return blur_mm > 0.0 ? gaussian_smooth(img, blur_mm, Boundary::Zero) : img;
}

}  // namespace longreg
