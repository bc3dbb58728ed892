#ifndef CQR_RNG_HPP
#define CQR_RNG_HPP

#include <cstdint>
#include <vector>

namespace cqr {

// xoshiro256** seeded via splitmix64. Self-contained so that streams are
// reproducible across standard libraries and platforms; std::shuffle and the
// std distributions are implementation-defined and would break that.
class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t x = seed;
    for (auto& w : s_) w = splitmix64(x);
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, 1) with 53 bits of precision.
  double next_real() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_real(); }

  bool bernoulli(double p) { return next_real() < p; }

  // Unbiased integer in [0, n) by rejection.
  uint64_t below(uint64_t n) {
    if (n == 0) return 0;
    const uint64_t threshold = (0 - n) % n;
    for (;;) {
      const uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  static uint64_t splitmix64(uint64_t& x) {
    uint64_t z = (x += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  uint64_t s_[4];
};

// Deterministic seed derivation for sub-streams (per-iteration reinit seeds,
// batch shuffling, dropout masks). Mixing is splitmix-style so nearby inputs
// land far apart.
inline uint64_t derive_seed(uint64_t base, uint64_t a, uint64_t b = 0) {
  uint64_t x = base;
  uint64_t h = Rng::splitmix64(x);
  x = h ^ (a + 0x9E3779B97F4A7C15ull);
  h = Rng::splitmix64(x);
  x = h ^ (b + 0xD1B54A32D192ED03ull);
  return Rng::splitmix64(x);
}

}  // namespace cqr

#endif
