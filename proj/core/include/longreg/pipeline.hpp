#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "longreg/detector.hpp"
#include "longreg/labels.hpp"
#include "longreg/refine.hpp"
#include "longreg/synth.hpp"

namespace longreg {

struct RegisterOptions {
  /// Resample images to a canonical LIA grid before refinement.
  bool conform = true;
  std::int64_t conform_size = 256;
  double conform_voxel_mm = 1.0;
  /// Blur of the reference detector's label masks.
  double blur_sigma_mm = 0.0;
  bool refine = false;
  RefineConfig refine_config;
  /// Merge table used for Dice when both label maps are given.
  MergeTable classes = MergeTable::j3();
};

struct RegistrationInputs {
  Volume moving;
  Volume fixed;
  std::optional<FeatureMaps> moving_features;
  std::optional<FeatureMaps> fixed_features;
  std::optional<LabelMap> moving_labels;
  std::optional<LabelMap> fixed_labels;
};

struct StageTiming {
  std::string stage;
  double ms = 0.0;
};

struct RegistrationReport {
  RigidTransform transform;
  RigidTransform keypoint_transform;
  /// "features" or "labels".
  std::string feature_source;
  std::int64_t channels = 0;
  std::vector<std::int32_t> dice_classes;
  std::optional<DiceScores> dice_before;
  std::optional<DiceScores> dice_after;
  std::optional<RefineResult> refinement;
  std::vector<StageTiming> timings;
};

/// Detect, fit and optionally refine. Feature maps win over label maps when
/// both are given; labels then only feed the Dice evaluation. Throws
/// InvalidArgument when neither source is complete.
RegistrationReport register_pair(const RegistrationInputs& in, const RegisterOptions& opt);

/// Mean Dice between moving labels pulled through `t` onto the fixed grid
/// and the fixed labels, after merging with `table`.
DiceScores transformed_dice(const LabelMap& moving, const LabelMap& fixed, const RigidTransform& t,
                            const MergeTable& table);

struct SweepOptions {
  std::vector<double> strengths;
  std::vector<double> smoothness;
  std::vector<std::uint64_t> seeds;
  /// Template for every generated pair; strength, smoothness and seed are
  /// overwritten per cell.
  SynthConfig base;
  RegisterOptions registration;
};

struct SweepCell {
  double strength = 0.0;
  double smoothness = 0.0;
  std::int64_t n = 0;
  double mean_dice = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::vector<double> dice;
};

/// Every (strength, smoothness, seed) pair drawn from sources[seed index
/// modulo count], registered and scored. Cells come out strength-major.
std::vector<SweepCell> run_sweep(const std::vector<LabelMap>& sources, const SweepOptions& opt);

/// Tab-separated table with a header row; fixed six-decimal formatting so
/// equal inputs give equal bytes.
std::string format_sweep_tsv(const std::vector<SweepCell>& cells);

}  // namespace longreg
