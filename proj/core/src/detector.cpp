#include "longreg/detector.hpp"

#include <algorithm>
#include <cmath>

#include "longreg/errors.hpp"
#include "longreg/filters.hpp"
#include "longreg/nifti.hpp"

namespace longreg {

namespace {

constexpr double kEmptyChannel = 1e-12;

}  // namespace

FeatureMaps::FeatureMaps(Geometry geometry, std::int64_t channels, std::vector<float> values)
    : geometry_(std::move(geometry)), channels_(channels), values_(std::move(values)) {
  geometry_.validate();
  if (channels_ < 1) throw Error(ErrorCode::InvalidArgument, "feature maps need at least one channel");
  if (static_cast<std::int64_t>(values_.size()) != channels_ * geometry_.voxel_count()) {
    throw Error(ErrorCode::InvalidArgument, "feature map size does not match channels x voxels");
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const float v = values_[i];
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "feature maps contain a non-finite value");
    if (v < 0.0f) {
      const auto c = static_cast<std::int64_t>(i) / geometry_.voxel_count();
      throw Error(ErrorCode::NegativeActivation, "channel " + std::to_string(c) + " has a negative activation");
    }
  }
}

std::span<const float> FeatureMaps::channel(std::int64_t c) const {
  if (c < 0 || c >= channels_) throw Error(ErrorCode::InvalidArgument, "channel index out of range");
  const auto n = static_cast<std::size_t>(geometry_.voxel_count());
  return std::span<const float>(values_).subspan(static_cast<std::size_t>(c) * n, n);
}

WeightedBarycenters barycenters(const FeatureMaps& fm) {
  const Geometry& g = fm.geometry();
  const Dims& n = g.dims;
  WeightedBarycenters out;
  std::vector<double> totals;
  for (std::int64_t c = 0; c < fm.channels(); ++c) {
    const auto data = fm.channel(c);
    double total = 0.0;
    Vec3 moment = Vec3::Zero();
    std::int64_t idx = 0;
    for (std::int64_t k = 0; k < n[2]; ++k) {
      for (std::int64_t j = 0; j < n[1]; ++j) {
        double row = 0.0;
        double row_x = 0.0;
        for (std::int64_t i = 0; i < n[0]; ++i, ++idx) {
          const double v = data[static_cast<std::size_t>(idx)];
          row += v;
          row_x += v * static_cast<double>(i);
        }
        total += row;
        moment += Vec3(row_x, row * static_cast<double>(j), row * static_cast<double>(k));
      }
    }
    if (total < kEmptyChannel) {
      out.points.push_back(g.center());
      out.empty_channels.push_back(c);
      totals.push_back(0.0);
    } else {
      out.points.push_back(g.to_world(moment / total));
      totals.push_back(total);
    }
  }
  double sum = 0.0;
  for (double t : totals) sum += t;
  if (out.empty_channels.size() == totals.size()) {
    throw Error(ErrorCode::AllChannelsEmpty, "every feature channel is empty");
  }
  for (double t : totals) out.channel_weights.push_back(t / sum);
  return out;
}

FeatureMaps label_centroid_detector(const LabelMap& labels, double blur_sigma_mm) {
  std::vector<std::int32_t> classes;
  for (auto l : label_set(labels)) {
    if (l != 0) classes.push_back(l);
  }
  if (classes.empty()) throw Error(ErrorCode::AllChannelsEmpty, "label map has no foreground labels");
  return label_centroid_detector(labels, classes, blur_sigma_mm);
}

FeatureMaps label_centroid_detector(const LabelMap& labels, std::span<const std::int32_t> classes,
                                    double blur_sigma_mm) {
  if (classes.empty()) throw Error(ErrorCode::AllChannelsEmpty, "no classes requested");
  if (!(blur_sigma_mm >= 0.0)) throw Error(ErrorCode::InvalidArgument, "blur sigma must be >= 0");
  const auto n = static_cast<std::size_t>(labels.size());
  std::vector<float> values(classes.size() * n, 0.0f);
  bool any = false;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    float* dst = values.data() + c * n;
    for (std::size_t i = 0; i < n; ++i) {
      if (labels[static_cast<std::int64_t>(i)] == classes[c]) {
        dst[i] = 1.0f;
        any = true;
      }
    }
    if (blur_sigma_mm > 0.0) {
      std::vector<double> tmp(dst, dst + n);
      const Vec3 sigma = Vec3::Constant(blur_sigma_mm).cwiseQuotient(labels.geometry().spacing());
      gaussian_smooth(tmp, labels.dims(), sigma, Boundary::Zero);
      std::transform(tmp.begin(), tmp.end(), dst, [](double v) { return static_cast<float>(std::max(v, 0.0)); });
    }
  }
  if (!any) throw Error(ErrorCode::AllChannelsEmpty, "none of the requested classes is present");
  return FeatureMaps(labels.geometry(), static_cast<std::int64_t>(classes.size()), std::move(values));
}

RigidTransform register_keypoints(const FeatureMaps& moving, const FeatureMaps& fixed) {
  if (moving.channels() != fixed.channels()) {
    throw Error(ErrorCode::InvalidArgument, "moving and fixed feature maps have different channel counts (" +
                                                std::to_string(moving.channels()) + " vs " +
                                                std::to_string(fixed.channels()) + ")");
  }
  const WeightedBarycenters a = barycenters(moving);
  const WeightedBarycenters b = barycenters(fixed);
  return fit_weighted_rigid({a.points, a.channel_weights}, {b.points, b.channel_weights});
}

FeatureMaps load_feature_maps(const std::filesystem::path& path) {
  NiftiData nii = read_nifti(path);
  for (std::size_t i = 0; i < nii.values.size(); ++i) {
    if (nii.values[i] < 0.0f) {
      const auto c = static_cast<std::int64_t>(i) / nii.geometry.voxel_count();
      throw Error(ErrorCode::NegativeActivation,
                  path.string() + ": channel " + std::to_string(c) + " has a negative activation");
    }
  }
  return FeatureMaps(nii.geometry, nii.frames, std::move(nii.values));
}

void save_feature_maps(const FeatureMaps& fm, const std::filesystem::path& path) {
  write_nifti(path, fm.geometry(), fm.channels(), NiftiType::Float32, fm.values());
}

}  // namespace longreg
