#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace modcausal {

/// Deterministic xoshiro256++ generator. Self-contained so that seeded runs
/// reproduce bit-identically across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    // splitmix64 expansion of the seed
    std::uint64_t x = seed;
    for (auto& word : state_) {
      x += 0x9e3779b97f4a7c15ULL;
      std::uint64_t z = x;
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
      word = z ^ (z >> 31);
    }
  }

  std::uint64_t next_u64() {
    auto rotl = [](std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); };
    std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform double in [0, 1).
  double next_double() { return (next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n).
  int uniform_int(int n) { return (int)(next_double() * n); }

  int categorical(const std::vector<double>& probs) {
    double r = next_double(), acc = 0;
    for (std::size_t i = 0; i < probs.size(); i++) {
      acc += probs[i];
      if (r < acc) return (int)i;
    }
    return (int)probs.size() - 1;
  }

  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = next_double(), u2 = next_double();
    while (u1 <= 1e-300) u1 = next_double();
    double mag = std::sqrt(-2.0 * std::log(u1));
    cached_ = mag * std::sin(6.283185307179586 * u2);
    has_cached_ = true;
    return mag * std::cos(6.283185307179586 * u2);
  }

 private:
  std::uint64_t state_[4];
  double cached_ = 0;
  bool has_cached_ = false;
};

}  // namespace modcausal
