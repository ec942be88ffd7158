// Shared helpers for the unit tests: seeded random instances and small
// numerical utilities.  Everything is deterministic given the seed.
#pragma once

#include <krigor/common.hpp>
#include <krigor/kernels.hpp>

namespace test_support {

inline krigor::Matrix random_design(krigor::Rng& rng, int n, int r) {
  krigor::Matrix x(n, r);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < r; ++j) x(i, j) = rng.uniform01_open();
  return x;
}

inline krigor::Vector random_lengths(krigor::Rng& rng, int r, double lo = 0.1,
                                     double hi = 2.0) {
  krigor::Vector t(r);
  for (int j = 0; j < r; ++j)
    t[j] = std::exp(rng.uniform(std::log(lo), std::log(hi)));
  return t;
}

inline double max_rel_diff(const krigor::Matrix& a, const krigor::Matrix& b) {
  const double scale = std::max(1e-12, a.cwiseAbs().maxCoeff());
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

}  // namespace test_support
