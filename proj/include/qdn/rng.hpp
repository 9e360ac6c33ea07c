#pragma once

#include <cstdint>
#include <vector>

namespace qdn {

// SplitMix64 generator with hand-rolled distributions. std::random
// distributions are implementation-defined, which would break the
// same-seed-same-bytes guarantee across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::uint64_t bounded(std::uint64_t n) { return n == 0 ? 0 : next() % n; }

  // Standard normal via Box-Muller; caches the second variate.
  double normal();

  // Poisson deviate: Knuth's product method for small lambda, rounded
  // normal approximation for large lambda.
  std::int64_t poisson(double lambda);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(bounded(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Derives an independent stream, e.g. one per pipeline stage.
  Rng fork(std::uint64_t stream) {
    Rng r(state_ ^ (0xA0761D6478BD642Full * (stream + 1)));
    r.next();
    return r;
  }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace qdn
