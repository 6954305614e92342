#pragma once
// Deterministic RNG built on splitmix64. The integer stream is a pure
// function of the seed and is identical on every platform; float helpers
// use only exact scaling plus libm (log/sqrt/sin/cos for normal draws).

#include <cmath>
#include <cstdint>
#include <utility>

namespace mcd {

class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), state_(seed) {}

  uint64_t seed() const { return seed_; }

  uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // [0,1) with 53-bit resolution
  double uniform() { return (double)(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0,n); modulo mapping (bias immaterial at the ranges used here)
  int uniform_int(int n) { return n <= 1 ? 0 : (int)(next_u64() % (uint64_t)n); }

  bool coin() { return (next_u64() & 1ULL) != 0; }

  // Box-Muller, pairs cached
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0,1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Independent child stream; pure function of (seed, id), does not
  // consume state of the parent.
  Rng fork(uint64_t id) const {
    Rng mix(seed_ ^ (0x9E3779B97F4A7C15ULL * (id + 1)));
    return Rng(mix.next_u64());
  }

  // Fisher-Yates with this stream (std::shuffle is implementation-defined)
  template <typename V>
  void shuffle(V& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = (size_t)(next_u64() % (uint64_t)i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t seed_;
  uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mcd
