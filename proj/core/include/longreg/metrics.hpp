#pragma once

#include "longreg/volume.hpp"

namespace longreg {

/// Mean squared intensity difference over the voxels where `mask` is
/// non-zero (all voxels when null). Throws GeometryMismatch.
double mse_metric(const Volume& a, const Volume& b, const LabelMap* mask = nullptr);

/// H(A) + H(B) - H(A, B) in nats. Each image is min-max normalised to
/// [0, 1] and spread over `bins` bins with linear (partial volume) weights,
/// so bin centres sit at i / (bins - 1).
double mi_metric(const Volume& a, const Volume& b, int bins = 32, const LabelMap* mask = nullptr);

}  // namespace longreg
