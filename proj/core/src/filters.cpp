#include "longreg/filters.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "longreg/errors.hpp"

namespace longreg {

namespace {

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (auto& v : k) v /= sum;
  return k;
}

void smooth_axis(std::span<double> data, const Dims& dims, int axis, double sigma, Boundary boundary) {
  const auto kernel = gaussian_kernel(sigma);
  const auto radius = static_cast<std::int64_t>(kernel.size() / 2);
  const std::int64_t n = dims[axis];
  const std::int64_t stride = axis == 0 ? 1 : (axis == 1 ? dims[0] : dims[0] * dims[1]);
  const std::int64_t outer = dims[0] * dims[1] * dims[2] / n;

  std::vector<double> line(static_cast<std::size_t>(n));
  for (std::int64_t o = 0; o < outer; ++o) {
    // Decompose the line index into its start offset.
    std::int64_t start;
    if (axis == 0) {
      start = o * n;
    } else if (axis == 1) {
      start = (o % dims[0]) + (o / dims[0]) * dims[0] * dims[1];
    } else {
      start = o;
    }
    for (std::int64_t i = 0; i < n; ++i) line[static_cast<std::size_t>(i)] = data[static_cast<std::size_t>(start + i * stride)];
    for (std::int64_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::int64_t r = -radius; r <= radius; ++r) {
        std::int64_t s = i + r;
        if (s < 0 || s >= n) {
          if (boundary == Boundary::Zero) continue;
          s = std::clamp<std::int64_t>(s, 0, n - 1);
        }
        acc += kernel[static_cast<std::size_t>(r + radius)] * line[static_cast<std::size_t>(s)];
      }
      data[static_cast<std::size_t>(start + i * stride)] = acc;
    }
  }
}

}  // namespace

void gaussian_smooth(std::span<double> data, const Dims& dims, const Vec3& sigma_voxels, Boundary boundary) {
  if (static_cast<std::int64_t>(data.size()) != dims[0] * dims[1] * dims[2]) {
    throw Error(ErrorCode::InvalidArgument, "gaussian_smooth: data length does not match dims");
  }
  for (int axis = 0; axis < 3; ++axis) {
    if (sigma_voxels[axis] < 0.0) throw Error(ErrorCode::InvalidArgument, "negative smoothing sigma");
    if (sigma_voxels[axis] > 0.0) smooth_axis(data, dims, axis, sigma_voxels[axis], boundary);
  }
}

Volume gaussian_smooth(const Volume& vol, double sigma_mm, Boundary boundary) {
  if (sigma_mm == 0.0) return vol;
  std::vector<double> buf(vol.data().begin(), vol.data().end());
  const Vec3 sigma = Vec3::Constant(sigma_mm).cwiseQuotient(vol.geometry().spacing());
  gaussian_smooth(buf, vol.dims(), sigma, boundary);
  std::vector<float> out(buf.begin(), buf.end());
  return Volume(vol.geometry(), std::move(out));
}

}  // namespace longreg
