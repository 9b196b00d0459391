#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace crrl {

/// Seedable random stream with fully specified transforms, so that a given
/// (seed, draw sequence) produces the same doubles on every platform.
/// std::mt19937_64 is pinned by the standard; the uniform/normal mappings
/// below are ours instead of the implementation-defined std distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  /// Uniform double in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; generates pairs, caches the spare.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mu, double sigma) { return mu + sigma * normal(); }

  /// Unbiased uniform index in [0, n), Lemire's method.
  std::size_t index(std::size_t n) {
    const std::uint64_t range = n;
    while (true) {
      const std::uint64_t x = next_u64();
      unsigned __int128 m = static_cast<unsigned __int128>(x) * range;
      const std::uint64_t low = static_cast<std::uint64_t>(m);
      if (low < range) {
        const std::uint64_t threshold = (0 - range) % range;
        if (low < threshold) continue;
      }
      return static_cast<std::size_t>(m >> 64);
    }
  }

  /// Independent named substream derived from this stream's seed (not its
  /// current position), so fork order does not matter.
  Rng fork(std::string_view tag) const {
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a
    for (char c : tag) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ull;
    }
    return Rng(splitmix64(seed_ ^ h));
  }

  std::uint64_t seed() const { return seed_; }

 private:
  static std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  std::uint64_t seed_;
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace crrl
