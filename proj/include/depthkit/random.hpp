#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace depthkit {

/// Seedable generator owned by whoever needs randomness. Draws are built
/// directly on the engine output so sequences are identical across standard
/// library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n), unbiased.
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }

  std::string serialize() const;
  void deserialize(const std::string& state);

  bool operator==(const Rng&) const = default;

 private:
  std::mt19937_64 engine_;
};

/// Stream seed for (seed, stream) pairs, e.g. one per loader worker or epoch.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace depthkit
