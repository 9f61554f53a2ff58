#include "longreg/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <set>

#include "longreg/errors.hpp"

namespace longreg {

namespace {

class Stopwatch {
 public:
  double lap_ms() {
    const auto now = std::chrono::steady_clock::now();
    const double ms = std::chrono::duration<double, std::milli>(now - last_).count();
    last_ = now;
    return ms;
  }

 private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

std::vector<std::int32_t> foreground_union(const LabelMap& a, const LabelMap& b) {
  std::set<std::int32_t> all;
  for (auto l : label_set(a)) all.insert(l);
  for (auto l : label_set(b)) all.insert(l);
  all.erase(0);
  return {all.begin(), all.end()};
}

}  // namespace

DiceScores transformed_dice(const LabelMap& moving, const LabelMap& fixed, const RigidTransform& t,
                            const MergeTable& table) {
  const LabelMap moved = resample(moving, t, fixed.geometry());
  const auto classes = table.classes();
  return dice_scores(merge_classes(moved, table), merge_classes(fixed, table), classes);
}

RegistrationReport register_pair(const RegistrationInputs& in, const RegisterOptions& opt) {
  RegistrationReport report;
  Stopwatch clock;

  FeatureMaps fm_m;
  FeatureMaps fm_f;
  if (in.moving_features && in.fixed_features) {
    fm_m = *in.moving_features;
    fm_f = *in.fixed_features;
    report.feature_source = "features";
  } else if (in.moving_labels && in.fixed_labels) {
    const auto classes = foreground_union(*in.moving_labels, *in.fixed_labels);
    if (classes.empty()) throw Error(ErrorCode::AllChannelsEmpty, "label maps have no foreground labels");
    fm_m = label_centroid_detector(*in.moving_labels, classes, opt.blur_sigma_mm);
    fm_f = label_centroid_detector(*in.fixed_labels, classes, opt.blur_sigma_mm);
    report.feature_source = "labels";
  } else {
    throw Error(ErrorCode::InvalidArgument, "registration needs feature maps or label maps for both images");
  }
  report.channels = fm_m.channels();
  report.timings.push_back({"detect", clock.lap_ms()});

  report.keypoint_transform = register_keypoints(fm_m, fm_f);
  report.transform = report.keypoint_transform;
  report.timings.push_back({"fit", clock.lap_ms()});

  if (opt.refine) {
    Volume m = in.moving;
    Volume f = in.fixed;
    RefineConfig cfg = opt.refine_config;
    if (opt.conform) {
      m = resample(m, RigidTransform::identity(),
                   conform_geometry(m.geometry(), opt.conform_size, opt.conform_voxel_mm));
      f = resample(f, RigidTransform::identity(),
                   conform_geometry(f.geometry(), opt.conform_size, opt.conform_voxel_mm));
      if (cfg.mask) cfg.mask = resample(*cfg.mask, RigidTransform::identity(), f.geometry());
      report.timings.push_back({"conform", clock.lap_ms()});
    }
    report.refinement = refine_rigid(m, f, report.keypoint_transform, cfg);
    report.transform = report.refinement->transform;
    report.timings.push_back({"refine", clock.lap_ms()});
  }

  if (in.moving_labels && in.fixed_labels) {
    report.dice_classes = opt.classes.classes();
    report.dice_before =
        transformed_dice(*in.moving_labels, *in.fixed_labels, RigidTransform::identity(), opt.classes);
    report.dice_after = transformed_dice(*in.moving_labels, *in.fixed_labels, report.transform, opt.classes);
    report.timings.push_back({"evaluate", clock.lap_ms()});
  }
  return report;
}

std::vector<SweepCell> run_sweep(const std::vector<LabelMap>& sources, const SweepOptions& opt) {
  if (sources.empty()) throw Error(ErrorCode::InvalidArgument, "sweep needs at least one label map");
  if (opt.strengths.empty() || opt.smoothness.empty() || opt.seeds.empty()) {
    throw Error(ErrorCode::InvalidArgument, "sweep lists must be non-empty");
  }
  std::vector<SweepCell> cells;
  for (double strength : opt.strengths) {
    for (double smooth : opt.smoothness) {
      SweepCell cell;
      cell.strength = strength;
      cell.smoothness = smooth;
      for (std::size_t s = 0; s < opt.seeds.size(); ++s) {
        SynthConfig cfg = opt.base;
        cfg.deformation_strength = strength;
        cfg.smoothness_level = smooth;
        cfg.seed = opt.seeds[s];
        const TrainingPair pair = make_pair(sources[s % sources.size()], cfg);
        RegistrationInputs in{pair.moving_image, pair.fixed_image, std::nullopt, std::nullopt,
                              pair.moving_labels, pair.fixed_labels};
        const RegistrationReport r = register_pair(in, opt.registration);
        cell.dice.push_back(r.dice_after->mean());
      }
      cell.n = static_cast<std::int64_t>(cell.dice.size());
      double sum = 0.0;
      for (double d : cell.dice) sum += d;
      cell.mean_dice = sum / static_cast<double>(cell.n);
      double var = 0.0;
      for (double d : cell.dice) var += (d - cell.mean_dice) * (d - cell.mean_dice);
      const double sd = cell.n > 1 ? std::sqrt(var / static_cast<double>(cell.n - 1)) : 0.0;
      const double half = 1.96 * sd / std::sqrt(static_cast<double>(cell.n));
      cell.ci_low = cell.mean_dice - half;
      cell.ci_high = cell.mean_dice + half;
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

std::string format_sweep_tsv(const std::vector<SweepCell>& cells) {
  std::string out = "strength\tsmoothness\tn\tmean_dice\tci_low\tci_high\n";
  char buf[256];
  for (const auto& c : cells) {
    std::snprintf(buf, sizeof buf, "%.6f\t%.6f\t%lld\t%.6f\t%.6f\t%.6f\n", c.strength, c.smoothness,
                  static_cast<long long>(c.n), c.mean_dice, c.ci_low, c.ci_high);
    out += buf;
  }
  return out;
}

}  // namespace longreg
