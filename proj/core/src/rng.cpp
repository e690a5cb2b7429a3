#include <selfloop/rng.hpp>

#include <cmath>

namespace selfloop {

double Rng::normal() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_normal_;
  }
  // Marsaglia polar method: accept (u, v) uniform on the unit disk, then
  // u * sqrt(-2 ln s / s) and v * sqrt(-2 ln s / s) are independent normals.
  double u, v, s;
  do {
    u = 2.0 * uniform01() - 1.0;
    v = 2.0 * uniform01() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  cached_normal_ = v * f;
  has_cached_ = true;
  return u * f;
}

int Rng::pick(int n) {
  if (n <= 0) throw ValidationError("Rng::pick needs n >= 1");
  const auto un = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() / un * un;
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return static_cast<int>(x % un);
}

RunSeed Rng::derive(RunSeed seed, std::uint64_t stream) {
  // splitmix64 finalizer over the combined word; distinct streams for
  // distinct (seed, stream) pairs.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace selfloop
