#pragma once

#include <filesystem>
#include <string>

#include "longreg/rigid.hpp"

namespace longreg {

// Transform files are ASCII: four rows of four whitespace-separated numbers
// holding the homogeneous world-to-world matrix (RAS mm) that maps FIXED
// coordinates to MOVING coordinates. Lines starting with '#' are comments.

void write_transform(const std::filesystem::path& path, const RigidTransform& t,
                     const std::string& comment = {});
RigidTransform read_transform(const std::filesystem::path& path);

std::string format_transform(const RigidTransform& t, const std::string& comment = {});
RigidTransform parse_transform(const std::string& text);

}  // namespace longreg
