#pragma once

#include <cstdint>

namespace ratiocast {

// SplitMix64 finalizer; the mixing core for all randomness in the library.
inline constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Counter-based random stream. A draw is a pure function of (key, counter),
// so independent substreams (per replica, per attempt, per domain) can be
// split off without any shared mutable state, and a given seed always yields
// the same sequence on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(mix64(seed ^ 0x243f6a8885a308d3ULL)) {}

  // Derives an independent stream; splitting is associative with distinct ids.
  [[nodiscard]] Rng stream(std::uint64_t id) const {
    Rng r(*this);
    r.key_ = mix64(key_ ^ mix64(id ^ 0x452821e638d01377ULL));
    r.counter_ = 0;
    return r;
  }

  [[nodiscard]] std::uint64_t bits_at(std::uint64_t counter) const noexcept {
    return mix64(key_ ^ mix64(counter ^ 0x13198a2e03707344ULL));
  }

  // Uniform double in [0, 1) from the top 53 bits.
  [[nodiscard]] double uniform_at(std::uint64_t counter) const noexcept {
    return static_cast<double>(bits_at(counter) >> 11) * 0x1.0p-53;
  }

  [[nodiscard]] bool bernoulli_at(std::uint64_t counter, double p) const noexcept {
    return uniform_at(counter) < p;
  }

  // Sequential interface; advances an internal counter.
  std::uint64_t next_bits() noexcept { return bits_at(counter_++); }
  double next_uniform() noexcept { return uniform_at(counter_++); }
  bool next_bernoulli(double p) noexcept { return next_uniform() < p; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace ratiocast
