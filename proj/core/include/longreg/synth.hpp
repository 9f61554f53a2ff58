#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "longreg/rng.hpp"
#include "longreg/volume.hpp"

namespace longreg {

struct SynthConfig {
  double max_rotation_deg = 30.0;
  double max_translation_mm = 15.0;
  double deformation_strength = 0.5;
  double smoothness_level = 1.0;
  std::array<double, 2> intensity_range{0.0, 1.0};
  /// Peak |log bias|; the bias is exp of a field interpolated from normal
  /// draws on a `bias_spacing_mm` grid.
  double bias_field_strength = 0.3;
  double noise_sigma_max = 0.05;
  double gamma_sigma = 0.25;
  int downsample_factor = 1;
  std::uint64_t seed = 0;

  double svf_spacing_mm = 16.0;
  int integration_steps = 7;
  double bias_spacing_mm = 32.0;
  /// Both sides share one intensity model (within-contrast pairs). Noise is
  /// still drawn per side.
  bool same_contrast = false;

  /// Throws InvalidArgument when a field is out of range.
  void validate() const;

  /// Applies one "key = value" setting. Unknown keys throw InvalidArgument.
  void set(const std::string& key, const std::string& value);
  /// Reads "key = value" lines ('#' comments) on top of the current values.
  void load(const std::filesystem::path& path);
  /// Every field as key/value strings, round-trippable through set().
  std::map<std::string, std::string> entries() const;
};

RigidTransform sample_rigid(const SynthConfig& cfg, Rng& rng);

/// Random smooth velocity field on `geometry`, scaled so that the integrated
/// displacement has mean magnitude `strength` mm.
VelocityField sample_svf(const Geometry& geometry, double strength, double smoothness, Rng& rng,
                         double coarse_spacing_mm = 16.0, int steps = 7);

/// Scaling and squaring. Returns the displacement phi - id.
DisplacementField integrate_svf(const VelocityField& v, int steps = 7);

/// Displacement of (id + a) o (id + b): x -> b(x) + a(x + b(x)). Both fields
/// must share geometry.
DisplacementField compose_displacements(const DisplacementField& a, const DisplacementField& b);

/// Mean displacement magnitude in mm.
double mean_magnitude(const DisplacementField& u);

/// One draw of the intensity model: a mean intensity per label, a bias
/// field, a noise level and a gamma exponent.
struct ContrastModel {
  std::map<std::int32_t, double> label_intensity;
  Volume log_bias;
  double noise_sigma = 0.0;
  double gamma_exponent = 1.0;
};

ContrastModel draw_contrast(const LabelMap& labels, const SynthConfig& cfg, Rng& rng);
/// Label intensities times exp(bias); no noise.
Volume render_clean(const LabelMap& labels, const ContrastModel& model);
/// Noise, min-max normalisation to [0, 1], gamma.
Volume corrupt(const Volume& clean, const ContrastModel& model, Rng& noise_rng);

/// draw_contrast, render_clean and corrupt in one call.
Volume synthesize_image(const LabelMap& labels, const SynthConfig& cfg, Rng& rng);

struct TrainingPair {
  Volume moving_image;
  Volume fixed_image;
  LabelMap moving_labels;
  LabelMap fixed_labels;
  /// Maps the fixed domain onto the moving one.
  RigidTransform true_rigid;
  DisplacementField moving_warp;
  DisplacementField fixed_warp;
};

/// Two views of one label map: side(x) = s(phi_side(R_side x)), with the
/// rigid rotations taken about the grid centre. Images are rendered on the
/// input map and warped trilinearly, then corrupted per side.
TrainingPair make_pair(const LabelMap& source, const SynthConfig& cfg);

}  // namespace longreg
