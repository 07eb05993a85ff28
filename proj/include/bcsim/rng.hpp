#pragma once

#include <cstdint>
#include <random>

namespace bcsim {

// Deterministic random source. All stochastic choices in the project go
// through this wrapper so that a run is reproducible from a single seed.
// Doubles are derived from the raw 64-bit stream with a fixed bit mapping
// instead of std::uniform_real_distribution, whose output is
// implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random mantissa bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Modulo bias is irrelevant at our n.
  std::uint64_t uniform_int(std::uint64_t n) { return engine_() % n; }

 private:
  std::mt19937_64 engine_;
};

// splitmix64 finalizer; used to derive independent stream seeds from
// (seed, stream index) pairs.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace bcsim
