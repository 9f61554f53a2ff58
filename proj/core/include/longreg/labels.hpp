#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "longreg/volume.hpp"

namespace longreg {

/// One binary channel per requested class. Classes absent from the map give
/// all-zero channels; a negative or repeated class throws UnknownClass.
std::vector<Volume> one_hot(const LabelMap& labels, std::span<const std::int32_t> classes);

/// Source label -> target class. Target 0 is background.
class MergeTable {
 public:
  MergeTable() = default;
  explicit MergeTable(std::map<std::int32_t, std::int32_t> mapping, std::string name = "custom");

  /// Every label in `labels` maps to itself.
  static MergeTable identity(std::span<const std::int32_t> labels);
  /// Left hemisphere, right hemisphere, cerebellum (classes 1..3) over
  /// FreeSurfer/SynthSeg label numbers.
  static MergeTable j3();
  /// Left cortex, right cortex, left subcortical grey matter, right
  /// subcortical grey matter, cerebellum (classes 1..5).
  static MergeTable j5();
  /// Whitespace-separated "source target" pairs, '#' comments.
  static MergeTable load(const std::filesystem::path& path);
  /// "J3", "J5" or a table file path.
  static MergeTable from_spec(const std::string& spec);

  /// Throws UnknownClass for an unmapped non-zero label. 0 maps to 0 unless
  /// listed.
  std::int32_t map(std::int32_t label) const;
  /// Sorted distinct non-zero targets.
  std::vector<std::int32_t> classes() const;
  const std::string& name() const { return name_; }
  const std::map<std::int32_t, std::int32_t>& mapping() const { return mapping_; }

 private:
  std::map<std::int32_t, std::int32_t> mapping_;
  std::string name_ = "custom";
};

LabelMap merge_classes(const LabelMap& labels, const MergeTable& table);

/// Label loss in the halfway space:
///   (1/|Omega|) sum_{j, x} [(s_m|_j o T^{1/2})(x) - (s_f|_j o T^{-1/2})(x)]^2
/// with one-hot channels interpolated trilinearly so the value is continuous
/// in T. Omega is the fixed grid; both maps must share geometry.
double halfway_label_mse(const LabelMap& moving, const LabelMap& fixed, const RigidTransform& t,
                         std::span<const std::int32_t> classes);

struct DiceScores {
  std::vector<double> per_class;
  /// Classes empty in both maps; their score is reported as 1.
  std::vector<std::int32_t> empty_classes;

  double mean() const;
};

/// 2|a_j & b_j| / (|a_j| + |b_j|) per class. Throws GeometryMismatch when the
/// grids differ.
DiceScores dice_scores(const LabelMap& a, const LabelMap& b, std::span<const std::int32_t> classes);
std::vector<double> dice(const LabelMap& a, const LabelMap& b, std::span<const std::int32_t> classes);

}  // namespace longreg
