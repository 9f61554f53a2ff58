#include "longreg/rng.hpp"

#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>
#include <boost/random/uniform_on_sphere.hpp>

namespace longreg {

double Rng::uniform(double lo, double hi) {
  boost::random::uniform_01<double> u;
  return lo + (hi - lo) * u(engine_);
}

double Rng::normal() {
  boost::random::normal_distribution<double> n(0.0, 1.0);
  return n(engine_);
}

Vec3 Rng::unit_vector() {
  boost::random::uniform_on_sphere<double> sphere(3);
  const auto v = sphere(engine_);
  return {v[0], v[1], v[2]};
}

std::uint64_t Rng::derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finaliser over the combined value
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace longreg
