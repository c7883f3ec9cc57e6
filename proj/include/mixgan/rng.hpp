#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mixgan/common.hpp"

namespace mixgan {

// Seeded generator with hand-rolled distributions. std::* distributions are
// implementation-defined, so sampling goes through explicit recurrences here;
// a serialized Rng replayed on any libstdc++/libc++ build produces the same
// stream. Every consumer draws in a documented, fixed order.
class Rng {
 public:
  Rng() : Rng(0) {}
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Derive an independent child seed (splitmix64 of seed ^ stream id).
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t bits() { return engine_(); }

  /// Uniform on [0, 1) with 53-bit resolution.
  real_t uniform() { return static_cast<real_t>(bits() >> 11) * 0x1.0p-53; }

  /// Uniform on [lo, hi).
  real_t uniform(real_t lo, real_t hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer on [lo, hi] inclusive, by rejection.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<std::int64_t>(bits());  // full range
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t x;
    do {
      x = bits();
    } while (x >= limit);
    return lo + static_cast<std::int64_t>(x % span);
  }

  bool coin() { return (bits() & 1ULL) != 0; }

  /// Standard normal via Box-Muller (no cached spare: state stays minimal).
  real_t normal() {
    const real_t u1 = static_cast<real_t>((bits() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    const real_t u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  real_t normal(real_t mean, real_t stddev) { return mean + stddev * normal(); }

  /// Gamma(alpha, 1) via Marsaglia-Tsang, with the boost trick for alpha < 1.
  real_t gamma(real_t alpha) {
    if (alpha < 1.0) {
      const real_t u = uniform();
      return gamma(alpha + 1.0) * std::pow(u > 0 ? u : 0x1.0p-53, 1.0 / alpha);
    }
    const real_t d = alpha - 1.0 / 3.0;
    const real_t c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      real_t x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const real_t u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u > 0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  /// Beta(a, b). Beta(1, 1) short-circuits to a single uniform draw.
  real_t beta(real_t a, real_t b) {
    if (a == 1.0 && b == 1.0) return uniform();
    const real_t x = gamma(a);
    const real_t y = gamma(b);
    return x / (x + y);
  }

  /// Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::string serialize() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  static Rng deserialize(const std::string& s) {
    Rng r;
    std::istringstream is(s);
    is >> r.engine_;
    if (!is) throw DataError("Rng::deserialize: malformed generator state");
    return r;
  }

  friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace mixgan
