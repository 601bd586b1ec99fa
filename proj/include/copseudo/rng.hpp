#pragma once

#include <cstdint>
#include <random>

namespace copseudo {

// SplitMix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix_seed(std::uint64_t x) noexcept;

// Combines a parent seed with a child id into a new seed.
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t id) noexcept;

/// Seeded random stream with platform-independent draws.
///
/// The standard distributions are implementation-defined, so uniform and
/// normal variates are computed here directly from the 64-bit engine output.
/// `split(id)` yields a child stream that depends only on (seed, id), never on
/// how far the parent has advanced.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(mix_seed(seed)) {}

  std::uint64_t seed() const noexcept { return seed_; }
  Rng split(std::uint64_t id) const { return Rng(derive_seed(seed_, id)); }

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n); n must be positive.
  std::uint64_t below(std::uint64_t n);
  // Uniform integer in [lo, hi].
  int between(int lo, int hi);
  bool bernoulli(double p) { return uniform() < p; }
  double normal(double mean = 0.0, double sigma = 1.0);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace copseudo
