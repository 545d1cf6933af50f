#pragma once

#include <cmath>
#include <cstdint>

namespace dhc {

// Counter-based generator (splitmix64 finalizer over an incrementing
// counter). The key is derived from (seed, sample, stream), so distinct
// samples and purposes get independent streams and results never depend
// on thread scheduling.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t sample, std::uint64_t stream)
      : key_(mix(mix(mix(seed + kGolden) + sample) + stream)) {}

  std::uint64_t next_u64() { return mix(key_ + kGolden * ++counter_); }

  // Uniform in [0, 1), 53-bit resolution.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Uniform integer in [0, n), n > 0. Unbiased via rejection.
  std::int64_t next_below(std::int64_t n) {
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return static_cast<std::int64_t>(v % bound);
  }

  bool next_bool() { return (next_u64() & 1u) != 0; }

  // Standard normal via Box-Muller; the spare value is cached.
  double next_gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = next_double();
    double u2 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace dhc
