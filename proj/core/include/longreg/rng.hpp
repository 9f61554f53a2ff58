#pragma once

#include <cstdint>
#include <random>

#include "longreg/rigid.hpp"

namespace longreg {

/// Seeded generator whose draws are identical across platforms and standard
/// libraries (the distributions come from Boost.Random, not <random>).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo, double hi);
  double normal();
  Vec3 unit_vector();

  /// Seed for an independent sub-stream, so that one component's draws do
  /// not shift another's.
  static std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

 private:
  std::mt19937_64 engine_;
};

}  // namespace longreg
