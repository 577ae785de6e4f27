#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>

namespace eeml {

namespace detail {

// splitmix64 finalizer; also used as a general 64-bit mixer for stream keys.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace detail

// Deterministic, splittable random stream. Generation is platform-independent
// (no std distributions involved), so an entire run is reproducible from
// (seed, stream id) alone. Splitting is counter-based: `split(i)` derives an
// independent child stream from the parent's key, regardless of how much the
// parent has been consumed.
class RngStream {
public:
  explicit RngStream(std::uint64_t seed)
      : key_(detail::mix64(seed)), state_(detail::mix64(key_ ^ 0x5eed5eed5eed5eedull)) {}

  RngStream split(std::uint64_t child) const {
    return RngStream(detail::mix64(key_ ^ detail::mix64(child ^ 0x9d15c0debeefull)), 0);
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1), 53-bit resolution
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  int next_below(int n) {
    if (n <= 0) throw std::invalid_argument("RngStream::next_below: n must be positive");
    return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n));
  }

  // standard normal via Box-Muller (cosine branch)
  double gaussian() {
    double u1 = next_double();
    double u2 = next_double();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // index draw from nonnegative weights (need not be normalized)
  int pick_weighted(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) {
      if (w < 0.0) throw std::invalid_argument("RngStream::pick_weighted: negative weight");
      total += w;
    }
    if (total <= 0.0) throw std::invalid_argument("RngStream::pick_weighted: zero total weight");
    double r = next_double() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      acc += weights[i];
      if (r < acc) return static_cast<int>(i);
    }
    return static_cast<int>(weights.size()) - 1;
  }

private:
  RngStream(std::uint64_t key, int) : key_(key), state_(detail::mix64(key ^ 0x5eed5eed5eed5eedull)) {}

  std::uint64_t key_;
  std::uint64_t state_;
};

}  // namespace eeml
