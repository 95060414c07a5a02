#pragma once

#include <cmath>
#include <cstdint>

namespace msdetr {

// splitmix64 generator. Standard-library distributions are
// implementation-defined, and the training loop promises byte-identical
// reruns, so all draws go through these hand-rolled helpers.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  uint64_t below(uint64_t n) { return n ? next_u64() % n : 0; }

  int range(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(below(static_cast<uint64_t>(hi - lo + 1)));
  }

  bool chance(double p) { return uniform() < p; }

  // Box-Muller; the paired draw is discarded for simplicity.
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(6.28318530717958647692 * u2);
  }

  // Derive an independent stream, e.g. one per scene.
  Rng fork(uint64_t salt) {
    Rng r(state_ ^ (0x9e3779b97f4a7c15ULL * (salt + 1)));
    r.next_u64();
    return r;
  }

 private:
  uint64_t state_;
};

}  // namespace msdetr
