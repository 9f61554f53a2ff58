#include <doctest.h>

#include "helpers.hpp"
#include "longreg/errors.hpp"
#include "longreg/phantom.hpp"
#include "longreg/pipeline.hpp"

using namespace longreg;
using testing_util::kDeg;

namespace {

RegisterOptions fast_options(bool refine) {
  RegisterOptions o;
  o.conform = false;
  o.refine = refine;
  return o;
}

}  // namespace

TEST_CASE("identical inputs register to the identity") {
  const LabelMap labels = make_brain_phantom(48, 2.5);
  const Volume image = make_smooth_phantom(48, 2.5);
  const RegistrationInputs in{image, image, std::nullopt, std::nullopt, labels, labels};
  for (bool refine : {false, true}) {
    const RegistrationReport r = register_pair(in, fast_options(refine));
    CHECK(r.transform.angle() < 0.01 * kDeg);
    CHECK(r.transform.translation().norm() < 0.01);
    CHECK(r.feature_source == "labels");
    CHECK(r.dice_after->mean() == 1.0);
    CHECK(r.refinement.has_value() == refine);
  }
}

TEST_CASE("a synthetic rigid pair is recovered and Dice improves") {
  const LabelMap source = make_brain_phantom(64, 2.0);
  SynthConfig c;
  c.deformation_strength = 0;
  c.max_rotation_deg = 20;
  c.max_translation_mm = 10;
  c.same_contrast = true;
  c.seed = 3;
  const TrainingPair p = make_pair(source, c);
  const RegistrationInputs in{p.moving_image, p.fixed_image, std::nullopt, std::nullopt, p.moving_labels,
                              p.fixed_labels};
  RegisterOptions o = fast_options(true);
  o.blur_sigma_mm = 2.0;
  const RegistrationReport r = register_pair(in, o);
  CHECK(rotation_error(r.transform, p.true_rigid) < 0.5 * kDeg);
  CHECK(translation_error(r.transform, p.true_rigid) < 0.5);
  CHECK(r.dice_after->mean() > r.dice_before->mean());
  CHECK(r.refinement->final_cost <= r.refinement->initial_cost);
  CHECK(is_valid_rotation(r.transform.rotation()));
  CHECK(r.dice_classes == std::vector<std::int32_t>{1, 2, 3});
}

TEST_CASE("feature maps take precedence over labels") {
  const LabelMap labels = make_brain_phantom(40, 3.0);
  const Volume image = make_smooth_phantom(40, 3.0);
  const FeatureMaps fm = label_centroid_detector(labels, 3.0);
  const RigidTransform shift = RigidTransform::from_translation(Vec3(3, 0, 0));
  std::vector<float> moved;
  for (std::int64_t c = 0; c < fm.channels(); ++c) {
    const auto ch = fm.channel(c);
    const Volume out = resample(Volume(fm.geometry(), std::vector<float>(ch.begin(), ch.end())), shift,
                                fm.geometry());
    moved.insert(moved.end(), out.data().begin(), out.data().end());
  }
  const FeatureMaps fixed(fm.geometry(), fm.channels(), moved);
  const RegistrationInputs in{image, image, fm, fixed, labels, labels};
  const RegistrationReport r = register_pair(in, fast_options(false));
  CHECK(r.feature_source == "features");
  CHECK(translation_error(r.transform, shift) < 0.05);
  // labels still feed the evaluation
  CHECK(r.dice_before->mean() == 1.0);
  CHECK(r.dice_after->mean() < 1.0);
}

TEST_CASE("registration needs a feature source") {
  const Volume image = make_smooth_phantom(16, 4.0);
  const RegistrationInputs in{image, image, std::nullopt, std::nullopt, std::nullopt, std::nullopt};
  CHECK_THROWS_AS(register_pair(in, fast_options(false)), Error);
}

TEST_CASE("transformed dice") {
  const LabelMap labels = make_brain_phantom(32, 4.0);
  CHECK(transformed_dice(labels, labels, RigidTransform::identity(), MergeTable::j5()).mean() == 1.0);
  const DiceScores shifted =
      transformed_dice(labels, labels, RigidTransform::from_translation(Vec3(8, 0, 0)), MergeTable::j3());
  CHECK(shifted.mean() < 0.9);
}

TEST_CASE("sweep") {
  const std::vector<LabelMap> sources{make_brain_phantom(32, 4.0)};
  SweepOptions o;
  o.strengths = {0.0, 2.0};
  o.smoothness = {1.0};
  o.seeds = {1, 2, 3};
  o.base.same_contrast = true;
  o.registration = fast_options(true);
  o.registration.refine_config.iterations = 30;
  const auto cells = run_sweep(sources, o);
  REQUIRE(cells.size() == 2);
  CHECK(cells[0].strength == 0.0);
  CHECK(cells[1].strength == 2.0);
  for (const auto& c : cells) {
    CHECK(c.n == 3);
    CHECK(c.ci_low <= c.mean_dice);
    CHECK(c.mean_dice <= c.ci_high);
  }
  const std::string tsv = format_sweep_tsv(cells);
  CHECK(tsv.rfind("strength\tsmoothness\tn\tmean_dice\tci_low\tci_high\n", 0) == 0);
  CHECK(format_sweep_tsv(run_sweep(sources, o)) == tsv);

  o.seeds.clear();
  CHECK_THROWS_AS(run_sweep(sources, o), Error);
}
