#include "icefuse/common/rng.hpp"

#include <array>
#include <cmath>
#include <numbers>

namespace icefuse {

double CounterRng::normal(std::uint64_t counter) const noexcept {
  const double u1 = uniform_open(2 * counter);
  const double u2 = uniform(2 * counter + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

namespace {

constexpr int kLayers = 256;
constexpr double kTail = 3.6541528853610088;
constexpr double kArea = 0.00492867323399;

double density(double x) { return std::exp(-0.5 * x * x); }

struct ZigguratTables {
  std::array<double, kLayers + 1> x{};
  std::array<double, kLayers + 1> f{};

  ZigguratTables() {
    x[0] = kArea / density(kTail);
    x[1] = kTail;
    for (int i = 1; i < kLayers - 1; ++i) x[i + 1] = std::sqrt(-2.0 * std::log(kArea / x[i] + density(x[i])));
    x[kLayers - 1] = x[kLayers - 1] > 0.0 ? x[kLayers - 1] : 0.0;
    x[kLayers] = 0.0;
    for (int i = 0; i <= kLayers; ++i) f[i] = density(x[i]);
  }
};

const ZigguratTables& tables() {
  static const ZigguratTables t;
  return t;
}

double unit(std::uint64_t b) { return static_cast<double>(b >> 11) * 0x1.0p-53; }

double unit_open(std::uint64_t b) { return (static_cast<double>(b >> 11) + 1.0) * 0x1.0p-53; }

}  // namespace

double CounterRng::gaussian(std::uint64_t counter) const noexcept {
  const auto& t = tables();
  std::uint64_t b = bits(counter);
  std::uint64_t state = b;
  for (;;) {
    const int i = static_cast<int>(b & 0xff);
    const double sign = (b & 0x100) ? -1.0 : 1.0;
    const double x = unit(b) * t.x[i];
    if (x < t.x[i + 1]) return sign * x;
    if (i == 0) {
      double tx, ty;
      do {
        tx = -std::log(unit_open(state = splitmix64(state))) / kTail;
        ty = -std::log(unit_open(state = splitmix64(state)));
      } while (2.0 * ty < tx * tx);
      return sign * (kTail + tx);
    }
    const double u = unit(state = splitmix64(state));
    if (t.f[i + 1] + u * (t.f[i] - t.f[i + 1]) < density(x)) return sign * x;
    b = state = splitmix64(state);
  }
}

std::uint64_t Stream::below(std::uint64_t n) noexcept {
  if (n <= 1) return 0;
  // Lemire-style rejection keeps the draw unbiased.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  for (;;) {
    const std::uint64_t b = rng_.bits(next_++);
    if (b < limit) return b % n;
  }
}

}  // namespace icefuse
