#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "longreg/rigid.hpp"

namespace testing_util {

inline constexpr double kDeg = 3.14159265358979323846 / 180.0;

/// Uniform rotation axis, angle uniform in [0, max_angle], translation
/// components uniform in +-max_t.
inline longreg::RigidTransform random_rigid(std::mt19937_64& g, double max_angle, double max_t) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  longreg::Vec3 axis(n(g), n(g), n(g));
  axis.normalize();
  const double angle = max_angle * u(g);
  const longreg::Vec3 t(max_t * (2 * u(g) - 1), max_t * (2 * u(g) - 1), max_t * (2 * u(g) - 1));
  return {longreg::RigidTransform::from_axis_angle(axis, angle).rotation(), t};
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("longreg_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing_util
