#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string_view>

namespace aql {

/// SplitMix64 finalizer. Used to decorrelate seeds before they reach the engine.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// FNV-1a, used to turn cell names into stable stream identifiers.
constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Seed for one run, derived from (master seed, cell id, seed index).
/// Each component passes through its own mixing round so that swapping
/// components yields a different stream.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t cell_id,
                                    std::uint64_t seed_index) noexcept {
  std::uint64_t h = splitmix64(master ^ 0x243F6A8885A308D3ULL);
  h = splitmix64(h ^ cell_id);
  h = splitmix64(h ^ (seed_index + 0x13198A2E03707344ULL));
  return h;
}

/// Seeded random stream with portable sampling routines.
///
/// The distributions are written out by hand rather than taken from
/// <random> so that streams are identical across standard libraries.
class RandomStream {
 public:
  using engine_type = std::mt19937_64;

  explicit RandomStream(std::uint64_t seed = 0) : engine_(splitmix64(seed)) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer on [0, n). Rejection sampling keeps it unbiased.
  std::size_t index(std::size_t n) {
    if (n == 0) throw std::invalid_argument("RandomStream::index: n must be positive");
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return static_cast<std::size_t>(x % bound);
  }

  /// Standard normal via the Box-Muller transform (second value cached).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Draws an index from a discrete distribution given by `probs`.
  std::size_t categorical(std::span<const double> probs) {
    const double u = uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return i;
    }
    // Rounding can leave acc slightly below 1; fall back to the last
    // index with positive mass.
    for (std::size_t i = probs.size(); i-- > 0;)
      if (probs[i] > 0.0) return i;
    throw std::invalid_argument("RandomStream::categorical: empty distribution");
  }

  /// Independent child stream; advances this stream by one draw.
  RandomStream split() { return RandomStream(engine_()); }

 private:
  engine_type engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace aql
