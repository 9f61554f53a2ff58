#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "longreg/volume.hpp"

namespace longreg {

enum class NiftiType : std::int16_t {
  UInt8 = 2,
  Int16 = 4,
  Int32 = 8,
  Float32 = 16,
  Float64 = 64,
};

/// Decoded single-file NIfTI-1. Values are stored as float after applying
/// scl_slope / scl_inter; 4D files keep frames contiguous (x fastest, then
/// y, z, frame).
struct NiftiData {
  Geometry geometry;
  std::int64_t frames = 1;
  NiftiType datatype = NiftiType::Float32;
  std::vector<float> values;
};

/// Reads .nii or .nii.gz (little-endian). The voxel-to-world affine comes
/// from the sform when sform_code > 0, else the qform when qform_code > 0,
/// else the pixdim scaling.
NiftiData read_nifti(const std::filesystem::path& path);

/// Writes a single-file NIfTI-1 with the sform set from the geometry. A
/// ".gz" suffix selects gzip compression.
void write_nifti(const std::filesystem::path& path, const Geometry& geometry, std::int64_t frames,
                 NiftiType datatype, std::span<const float> values);

Volume read_volume(const std::filesystem::path& path);
/// Rejects negative or non-integral voxel values.
LabelMap read_labels(const std::filesystem::path& path);

void write_volume(const std::filesystem::path& path, const Volume& vol);
/// Stored as uint8 when every label fits, else int16, else int32.
void write_labels(const std::filesystem::path& path, const LabelMap& labels);

}  // namespace longreg
