#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "longreg/volume.hpp"

namespace longreg {

struct MetricKind {
  enum class Type { MSE, MI };
  Type type = Type::MSE;
  int bins = 32;

  static MetricKind mse() { return {Type::MSE, 32}; }
  static MetricKind mi(int bins = 32) { return {Type::MI, bins}; }
  std::string name() const;
};

struct RefineConfig {
  int iterations = 200;
  /// Per-coordinate scale of the descent step: rotation (rad) then
  /// translation (mm).
  std::array<double, 6> initial_step{0.01, 0.01, 0.01, 0.5, 0.5, 0.5};
  MetricKind metric;
  bool use_halfway_space = false;
  /// Non-zero voxels of a map on the fixed grid restrict the metric.
  std::optional<LabelMap> mask;
  /// The search stops once the step fraction falls below this.
  double min_step = 1e-6;

  /// Throws InvalidArgument when out of range.
  void validate() const;
};

struct TraceEntry {
  int iteration = 0;
  /// Best cost seen so far.
  double cost = 0.0;
  /// Step fraction that produced the last accepted move.
  double step = 0.0;
};

struct RefineResult {
  RigidTransform transform;
  std::vector<TraceEntry> trace;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  std::int64_t evaluations = 0;
};

/// Cost of T (lower is better): MSE(f, m o T) or -MI(f, m o T) over the
/// fixed grid, or between m o T^{1/2} and f o T^{-1/2} in halfway mode.
/// Samples outside a grid take the border value. For MI both images are
/// scaled by their own value range.
double refine_cost(const Volume& m, const Volume& f, const RigidTransform& t, const RefineConfig& cfg);

/// Gradient descent over six twist coordinates with finite-difference
/// gradients and a step-halving line search. Standard mode updates
/// T = T0 C exp(d) C^-1, with C the translation to the fixed grid centre; halfway
/// mode splits the update as T0^{1/2} C exp(d) C^-1 T0^{1/2}, which makes
/// swapping the inputs exactly mirror the search. Returns the best transform
/// seen. Throws DivergedStep when the starting cost or gradient is not
/// finite, and propagates AngleNearPi.
RefineResult refine_rigid(const Volume& m, const Volume& f, const RigidTransform& t0, const RefineConfig& cfg);

}  // namespace longreg
