#pragma once

#include <cmath>
#include <cstdint>

namespace ddn {

// SplitMix64 generator. Chosen over std::mt19937 because the whole state is
// one u64, streams can be split by hashing (seed, counter), and the update is
// trivial to port to another language when regenerating fixtures.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Independent stream for sample/leaf `index`; safe to draw any amount from
  // each split without affecting the others.
  Rng split(uint64_t index) const {
    Rng mix(state_ ^ (0x517cc1b727220a95ull * (index + 1)));
    Rng out(mix.next_u64());
    out.next_u64();
    return out;
  }

  // Uniform in [0,1).
  double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + (int)(next_u64() % (uint64_t)(hi - lo + 1));
  }

  // Box-Muller, one value per call (the pair's second half is discarded to
  // keep the draw count per sample easy to reason about).
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  uint64_t state() const { return state_; }

 private:
  uint64_t state_;
};

}  // namespace ddn
