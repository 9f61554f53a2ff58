#include "longreg/metrics.hpp"

#include <algorithm>
#include <limits>

#include "histogram.hpp"
#include "longreg/errors.hpp"

namespace longreg {

namespace {

void check_inputs(const Volume& a, const Volume& b, const LabelMap* mask) {
  if (!same_geometry(a.geometry(), b.geometry())) {
    throw Error(ErrorCode::GeometryMismatch, "metric inputs must share geometry");
  }
  if (mask && !same_geometry(mask->geometry(), a.geometry())) {
    throw Error(ErrorCode::GeometryMismatch, "mask must share the image geometry");
  }
}

bool included(const LabelMap* mask, std::int64_t i) { return !mask || (*mask)[i] != 0; }

}  // namespace

double mse_metric(const Volume& a, const Volume& b, const LabelMap* mask) {
  check_inputs(a, b, mask);
  double sum = 0.0;
  std::int64_t count = 0;
  for (std::int64_t i = 0; i < a.size(); ++i) {
    if (!included(mask, i)) continue;
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sum += d * d;
    ++count;
  }
  if (count == 0) throw Error(ErrorCode::InvalidArgument, "metric mask selects no voxels");
  return sum / static_cast<double>(count);
}

double mi_metric(const Volume& a, const Volume& b, int bins, const LabelMap* mask) {
  check_inputs(a, b, mask);
  if (bins < 2) throw Error(ErrorCode::InvalidArgument, "mutual information needs at least 2 bins");
  auto range = [&](const Volume& v) {
    float lo = std::numeric_limits<float>::infinity();
    float hi = -lo;
    for (std::int64_t i = 0; i < v.size(); ++i) {
      if (!included(mask, i)) continue;
      lo = std::min(lo, v[i]);
      hi = std::max(hi, v[i]);
    }
    return std::pair<double, double>(lo, hi);
  };
  const auto [alo, ahi] = range(a);
  const auto [blo, bhi] = range(b);
  if (!(alo <= ahi)) throw Error(ErrorCode::InvalidArgument, "metric mask selects no voxels");
  const double ascale = ahi > alo ? 1.0 / (ahi - alo) : 0.0;
  const double bscale = bhi > blo ? 1.0 / (bhi - blo) : 0.0;
  detail::JointHistogram h(bins);
  for (std::int64_t i = 0; i < a.size(); ++i) {
    if (!included(mask, i)) continue;
    h.add((a[i] - alo) * ascale, (b[i] - blo) * bscale);
  }
  return h.mutual_information();
}

}  // namespace longreg
