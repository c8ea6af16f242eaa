#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string_view>
#include <vector>

namespace icon {

// Counter-based deterministic generator (splitmix64). Identical seeds give
// identical draw sequences; every consumer owns its own instance, there is
// no global state. Independent streams are derived with fork().
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; consumes exactly two draws.
  double next_gaussian() {
    const double u1 = (double(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    const double u2 = double(next_u64() >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
  }

  // Uniform integer in [0, bound); unbiased via rejection.
  std::uint64_t next_below(std::uint64_t bound) {
    const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
    const std::uint64_t limit = max - max % bound;
    for (;;) {
      const std::uint64_t u = next_u64();
      if (u < limit) return u % bound;
    }
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[next_below(i)]);
    }
  }

  // Derives an independent stream from the current state and a purpose tag;
  // does not advance this generator.
  Rng fork(std::string_view purpose) const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const char c : purpose) {
      h ^= std::uint64_t(static_cast<unsigned char>(c));
      h *= 0x100000001b3ull;
    }
    std::uint64_t z = state_ ^ h;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return Rng(z ^ (z >> 31));
  }

 private:
  static constexpr double kTwoPi = 6.283185307179586476925286766559;
  std::uint64_t state_;
};

}  // namespace icon
