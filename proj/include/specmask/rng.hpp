#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace specmask {

/// Deterministic RNG used wherever a seed matters. All draws are pinned to
/// the mt19937_64 stream (the standard fixes its output exactly), and the
/// mappings below avoid std distributions, whose sequences are
/// implementation-defined.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  /// Uniform in [0,1) with 53-bit resolution.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0,n), rejection-sampled.
  uint64_t below(uint64_t n);

  /// Uniform integer in [lo,hi] inclusive.
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(below(static_cast<uint64_t>(hi - lo) + 1));
  }

  /// Standard normal via Box-Muller.
  double normal();

  /// Fisher-Yates shuffle driven by below().
  template <class T>
  void shuffle(std::vector<T>& xs) {
    for (size_t i = xs.size(); i > 1; --i) {
      std::swap(xs[i - 1], xs[below(i)]);
    }
  }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

/// Stable mixing of a base seed with job/sample identifiers, so per-image and
/// per-(epoch,index) streams are pure functions of their identifiers.
uint64_t derive_seed(uint64_t seed, uint64_t a, uint64_t b = 0);

}  // namespace specmask
