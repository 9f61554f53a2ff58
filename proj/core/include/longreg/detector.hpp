#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "longreg/volume.hpp"

namespace longreg {

/// k non-negative activation channels on one grid, stored channel after
/// channel (x fastest within a channel).
class FeatureMaps {
 public:
  FeatureMaps() = default;
  /// Throws NegativeActivation for a negative value and InvalidArgument for
  /// a non-finite one or a size that is not channels * voxel_count.
  FeatureMaps(Geometry geometry, std::int64_t channels, std::vector<float> values);

  const Geometry& geometry() const { return geometry_; }
  std::int64_t channels() const { return channels_; }
  std::span<const float> values() const { return values_; }
  std::span<const float> channel(std::int64_t c) const;

 private:
  Geometry geometry_;
  std::int64_t channels_ = 0;
  std::vector<float> values_;
};

struct WeightedBarycenters {
  /// World mm, one per channel.
  std::vector<Vec3> points;
  /// Channel share of the total activation; 0 for empty channels.
  std::vector<double> channel_weights;
  /// Channels whose total fell below 1e-12. Their point is the grid centre.
  std::vector<std::int64_t> empty_channels;
};

/// Throws AllChannelsEmpty when no channel carries activation.
WeightedBarycenters barycenters(const FeatureMaps& fm);

/// Reference detector: one channel per non-zero label (ascending), each a
/// binary mask blurred by `blur_sigma_mm` (0 keeps it binary).
FeatureMaps label_centroid_detector(const LabelMap& labels, double blur_sigma_mm = 0.0);
/// Same with an explicit channel list, so two maps with different label
/// sets still produce matching channels. Absent classes give empty channels.
FeatureMaps label_centroid_detector(const LabelMap& labels, std::span<const std::int32_t> classes,
                                    double blur_sigma_mm = 0.0);

/// Closed-form rigid fit between the two barycenter sets with channel
/// weights p_i * q_i. The result maps the fixed domain onto the moving one.
RigidTransform register_keypoints(const FeatureMaps& moving, const FeatureMaps& fixed);

/// 4D float32 NIfTI, channel index on the fourth axis.
FeatureMaps load_feature_maps(const std::filesystem::path& path);
void save_feature_maps(const FeatureMaps& fm, const std::filesystem::path& path);

}  // namespace longreg
