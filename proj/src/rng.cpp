#include "tact/rng.hpp"

#include <cmath>

namespace tact {

double Rng::normal() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_;
  }
  double u1 = uniform();
  if (u1 < 1e-300) u1 = 1e-300;
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * M_PI * u2;
  cached_ = r * std::sin(a);
  has_cached_ = true;
  return r * std::cos(a);
}

uint64_t Rng::mix(uint64_t seed, std::string_view tag) {
  // FNV-1a over the tag, then a splitmix64 finalizer over (seed ^ hash).
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 1099511628211ull;
  }
  uint64_t z = seed ^ h;
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

Tensor randn(const Shape& shape, DType dt, Rng& rng, double stddev) {
  Tensor t(shape, dt);
  for (int64_t i = 0; i < t.numel(); ++i) t.set(i, stddev * rng.normal());
  return t;
}

Tensor rand_uniform(const Shape& shape, DType dt, Rng& rng, double a, double b) {
  Tensor t(shape, dt);
  for (int64_t i = 0; i < t.numel(); ++i) t.set(i, rng.uniform(a, b));
  return t;
}

}  // namespace tact
