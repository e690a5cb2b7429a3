#pragma once

#include <selfloop/types.hpp>

#include <random>

namespace selfloop {

/// Deterministic random stream.
///
/// Engine: std::mt19937_64, whose output sequence is pinned by the C++
/// standard. All variate transforms live here so that streams never depend on
/// the standard library's unspecified distribution algorithms:
///   - uniform01: top 53 bits of the engine word, scaled by 2^-53 -> [0,1)
///   - normal:    Marsaglia polar method, second variate cached
///   - pick:      rejection sampling on the engine word -> {0,...,n-1}
/// Two runs with equal seed and equal config therefore produce identical
/// trajectories within one build. Bit-exactness across builds of *other*
/// implementations is not promised; acceptance checks are statistical.
class Rng {
 public:
  explicit Rng(RunSeed seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1).
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Standard normal; pairs are produced together and consumed lazily.
  double normal();

  /// Uniform integer in {0, ..., n-1}, n >= 1.
  int pick(int n);

  /// Derives an independent stream seed from (seed, stream) via splitmix64.
  /// Used for per-replica and per-sweep-point streams so parallel execution
  /// keeps determinism.
  static RunSeed derive(RunSeed seed, std::uint64_t stream);

 private:
  std::mt19937_64 engine_;
  double cached_normal_{0.0};
  bool has_cached_{false};
};

}  // namespace selfloop
