#pragma once

#include <cstdint>
#include <utility>
#include <string_view>

namespace icefuse {

// Counter-based random streams. A stream is identified by a 64-bit key and
// every draw is a pure function of (key, counter), so results do not depend
// on evaluation order or on how work is split across threads.

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// FNV-1a over the bytes of a name; used to key streams by tensor/site name.
constexpr std::uint64_t hash_name(std::string_view name) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

constexpr std::uint64_t derive_key(std::uint64_t parent, std::uint64_t child) noexcept {
  return splitmix64(parent ^ splitmix64(child + 0x632BE59BD9B4E019ULL));
}

inline std::uint64_t derive_key(std::uint64_t parent, std::string_view name) noexcept {
  return derive_key(parent, hash_name(name));
}

class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) noexcept : key_(key) {}

  std::uint64_t key() const noexcept { return key_; }

  std::uint64_t bits(std::uint64_t counter) const noexcept {
    return splitmix64(key_ ^ splitmix64(counter));
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform(std::uint64_t counter) const noexcept {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

  /// Uniform in (0, 1]; safe to pass to log().
  double uniform_open(std::uint64_t counter) const noexcept {
    return (static_cast<double>(bits(counter) >> 11) + 1.0) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller on two derived counters.
  double normal(std::uint64_t counter) const noexcept;

  /// Standard normal via a 256-layer ziggurat; one hash per draw except on rare rejections.
  double gaussian(std::uint64_t counter) const noexcept;

  bool bernoulli(std::uint64_t counter, double p) const noexcept { return uniform(counter) < p; }

 private:
  std::uint64_t key_;
};

/// Sequential convenience wrapper around a CounterRng.
class Stream {
 public:
  explicit Stream(std::uint64_t key) noexcept : rng_(key) {}

  double uniform() noexcept { return rng_.uniform(next_++); }
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  double normal() noexcept { return rng_.normal(next_++); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept;

 private:
  CounterRng rng_;
  std::uint64_t next_ = 0;
};

}  // namespace icefuse
