#pragma once

#include <cmath>
#include <cstdint>

namespace dskin {

// Counter-based generator built on the SplitMix64 mixing function.
// Draw n is mix(key + n * golden), so a stream is a pure function of
// (seed, counter) and any draw can be reproduced from its index alone.
// All floating-point draws are derived from the 64-bit stream in a fixed
// way, which keeps f32 and f64 training paths on identical streams.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : key_(mix(seed)) {}

  std::uint64_t next_u64() { return mix(key_ + kGolden * ++counter_); }

  // [0, 1), 53 mantissa bits
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller, cosine branch; consumes two uniforms per draw.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Integer in [0, n)
  std::uint64_t below(std::uint64_t n) { return n ? next_u64() % n : 0; }

  // Independent stream derived from this one's key; does not advance *this.
  CounterRng fork(std::uint64_t stream) const {
    CounterRng r(0);
    r.key_ = mix(key_ ^ mix(stream + 0x517cc1b727220a95ULL));
    r.counter_ = 0;
    return r;
  }

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }
  void set_counter(std::uint64_t c) { counter_ = c; }

  static std::uint64_t mix(std::uint64_t z) {
    z += kGolden;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace dskin
