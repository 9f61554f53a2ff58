#pragma once

#include <span>

#include "longreg/volume.hpp"

namespace longreg {

enum class Boundary {
  Zero,   // mass leaving the grid is lost
  Clamp,  // border values are extended
};

/// Separable Gaussian smoothing of x-fastest data in place. Sigmas are in
/// voxels per axis; the kernel is truncated at 3 sigma and normalised.
/// A sigma of 0 leaves that axis untouched.
void gaussian_smooth(std::span<double> data, const Dims& dims, const Vec3& sigma_voxels,
                     Boundary boundary);

/// Volume convenience wrapper with sigma in millimetres.
Volume gaussian_smooth(const Volume& vol, double sigma_mm, Boundary boundary = Boundary::Zero);

}  // namespace longreg
