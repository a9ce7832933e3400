#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "tact/tensor.hpp"

namespace tact {

// Seeded RNG with hand-rolled transforms so sequences are reproducible
// across standard-library implementations (std distributions are not).
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), eng_(seed) {}

  uint64_t seed() const { return seed_; }
  uint64_t next_u64() { return eng_(); }

  // [0,1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  // N(0,1) via Box-Muller; second value of each pair is cached.
  double normal();

  int64_t below(int64_t n) { return static_cast<int64_t>(next_u64() % static_cast<uint64_t>(n)); }

  // Deterministic derived stream; independent of how much of this
  // stream has been consumed.
  Rng child(std::string_view tag) const { return Rng(mix(seed_, tag)); }

  static uint64_t mix(uint64_t seed, std::string_view tag);

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i)
      std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(below(i + 1))]);
  }

 private:
  uint64_t seed_;
  std::mt19937_64 eng_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

Tensor randn(const Shape& shape, DType dt, Rng& rng, double stddev = 1.0);
Tensor rand_uniform(const Shape& shape, DType dt, Rng& rng, double a, double b);

}  // namespace tact
