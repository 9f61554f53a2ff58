#pragma once

#include <cstdint>

#include "longreg/volume.hpp"

namespace longreg {

/// Ellipsoid brain on a RAS grid centred at the origin, labelled with
/// FreeSurfer/SynthSeg numbers: cerebral white matter and cortex, lateral
/// ventricles, deep grey nuclei, hippocampus, amygdala, brainstem, cerebellum
/// and surrounding CSF. The anatomy fills about 90% of the field of view and
/// is mildly asymmetric so that no mirror symmetry aliases a rotation.
LabelMap make_brain_phantom(std::int64_t size = 64, double voxel_mm = 2.0);

/// Phantom labels painted with fixed tissue intensities in [0, 1] and
/// blurred by `blur_mm`, for tests that need a smooth image.
Volume make_smooth_phantom(std::int64_t size = 64, double voxel_mm = 2.0, double blur_mm = 3.0);

}  // namespace longreg
