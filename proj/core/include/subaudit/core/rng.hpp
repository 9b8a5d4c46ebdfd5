#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <utility>

namespace subaudit {

/// Deterministic splittable generator: xoshiro256** (Blackman & Vigna) whose
/// 256-bit state is filled by SplitMix64 from a (seed, stream) pair.
///
///   x0    = mix64(seed) ^ mix64(stream + 0x632BE59BD9B4E019)
///   s[i]  = splitmix64_next(x)            for i = 0..3
///   next  = rotl(s1 * 5, 7) * 9           (standard xoshiro256** update)
///
/// mix64 is the SplitMix64 finalizer (0xBF58476D1CE4E5B9, 0x94D049BB133111EB).
/// Every distribution below is implemented here rather than through <random>
/// so that draw sequences are identical across standard libraries.
///
/// Instances are single-owner; fan out to workers with split().
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }
  [[nodiscard]] std::uint64_t stream() const noexcept { return stream_; }

  /// Independent child generator; same (parent, id) always gives the same child.
  [[nodiscard]] Rng split(std::uint64_t id) const;

  std::uint64_t next_u64() noexcept;
  result_type operator()() noexcept { return next_u64(); }
  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() noexcept;
  /// Unbiased integer in [0, n); n must be > 0.
  std::uint64_t below(std::uint64_t n) noexcept;
  /// Standard normal via Box-Muller (one value per call).
  double normal() noexcept;
  double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }
  bool bernoulli(double p) noexcept { return uniform() < p; }
  /// Index drawn proportionally to non-negative `weights` (need not sum to 1).
  std::size_t categorical(std::span<const double> weights) noexcept;

  /// Fisher-Yates shuffle driven by below().
  template <typename T>
  void shuffle(std::span<T> items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::array<std::uint64_t, 4> state_{};
};

/// SplitMix64 finalizer; exposed for hashing seeds into stream ids.
std::uint64_t mix64(std::uint64_t x) noexcept;

}  // namespace subaudit
