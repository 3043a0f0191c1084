#pragma once

#include <cstdint>
#include <string_view>

namespace apn {

/// SplitMix64 generator.
///
/// Streams are derived with split(): the child seed is the parent's seed mixed
/// with a 64-bit stream key, so a child never depends on how many values the
/// parent has already produced. All initialization and shuffling in the
/// library derives from one root seed this way.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), state_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  // Standard normal by Box-Muller; the spare value is cached.
  double normal();

  Rng split(std::uint64_t stream) const;
  Rng split(std::string_view stream) const { return split(fnv1a(stream)); }

  static std::uint64_t mix(std::uint64_t z);
  static std::uint64_t fnv1a(std::string_view s);

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace apn
