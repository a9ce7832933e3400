#pragma once

#include <cmath>

#include "tact/graph.hpp"
#include "tact/rng.hpp"

namespace tt {

inline double max_diff(const tact::Tensor& a, const tact::Tensor& b) {
  if (a.shape() != b.shape()) return 1e300;
  double m = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.at(i) - b.at(i)));
  return m;
}

inline bool approx_eq(const tact::Tensor& a, const tact::Tensor& b, double tol) {
  return max_diff(a, b) <= tol;
}

inline tact::Tensor uniform_t(const tact::Shape& s, tact::Rng& rng, double lo = -1.0,
                              double hi = 1.0, tact::DType dt = tact::DType::F64) {
  return tact::rand_uniform(s, dt, rng, lo, hi);
}

}  // namespace tt
