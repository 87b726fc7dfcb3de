#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace aread {

// SplitMix64-based generator. Distribution helpers are hand-rolled so that
// streams are bit-reproducible across standard library implementations.
// Substreams are derived by hashing a label into the seed, so every consumer
// of randomness (split, candidate init, sampling, ...) gets an independent,
// named stream from the single run seed.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  static Rng substream(uint64_t seed, const std::string& label) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : label) {
      h ^= c;
      h *= 1099511628211ull;
    }
    Rng r(seed ^ h);
    r.next();  // decorrelate nearby seeds
    return r;
  }

  uint64_t next() {
    uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // uniform in [0,1)
  double uniform() { return double(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // modulo draw; bias is negligible for desk-scale ranges
  uint64_t below(uint64_t n) { return next() % n; }

  int index(int n) { return int(below(uint64_t(n))); }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925287 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

  // k distinct indices from [0,n), in draw order
  std::vector<int> sample_without_replacement(int n, int k) {
    std::vector<int> pool(n);
    for (int i = 0; i < n; ++i) pool[i] = i;
    shuffle(pool);
    pool.resize(size_t(k < n ? k : n));
    return pool;
  }

 private:
  uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace aread
