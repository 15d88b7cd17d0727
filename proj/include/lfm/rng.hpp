#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string_view>

namespace lfm {

namespace detail {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline constexpr std::uint64_t mix(std::uint64_t key, std::uint64_t v) noexcept {
  return splitmix64(key ^ splitmix64(v + 0x632be59bd9b4e019ULL));
}

}  // namespace detail

/// Seeded random stream addressed by (seed, purpose tag, epoch, index).
///
/// Identical addresses yield identical draw sequences on every platform: the
/// engine is mt19937_64 (whose output sequence is fixed by the standard) and
/// all conversions to real/int/normal values are done here rather than by
/// the implementation-defined <random> distributions.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string_view tag = {}, std::uint64_t epoch = 0,
            std::uint64_t index = 0)
      : key_(detail::mix(detail::mix(detail::mix(detail::splitmix64(seed), detail::fnv1a(tag)),
                                     epoch),
                         index)),
        engine_(key_) {}

  /// Independent child stream; does not advance this stream.
  RngStream fork(std::uint64_t index) const { return RngStream(detail::mix(key_, index), Raw{}); }
  RngStream fork(std::string_view tag, std::uint64_t index = 0) const {
    return RngStream(detail::mix(detail::mix(key_, detail::fnv1a(tag)), index), Raw{});
  }

  std::uint64_t key() const noexcept { return key_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform in the half-open interval [a, b).
  double uniform_real(double a, double b) {
    const double v = a + (b - a) * uniform01();
    return v < b ? v : std::nextafter(b, a);
  }

  /// Uniform integer in [0, n); n must be positive.
  std::uint64_t uniform_int(std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % n;
  }

  bool bernoulli(double p) { return uniform01() < p; }

  /// Standard normal via Box-Muller (one value per two uniforms).
  double normal() {
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  struct Raw {};
  RngStream(std::uint64_t key, Raw) : key_(key), engine_(key) {}

  std::uint64_t key_;
  std::mt19937_64 engine_;
};

}  // namespace lfm
