// Core value types, error types, RNG and diagnostics counters shared by all
// krigor components.
#pragma once

#include <Eigen/Dense>

#include <atomic>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

namespace krigor {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Thrown when the observation vector is numerically indistinguishable from an
// element of the trend space, so the integrated likelihood degenerates.
class DegenerateObservationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Thrown when the tail of a conditional posterior does not decay, i.e. the
// sampler detects a (numerically) non-integrable posterior.
class ExistenceViolationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace diag {

// Process-wide counters for numerical events that are tolerated but worth
// surfacing: clamped prior radicands, ill-conditioned factorizations, bound
// violations.  Tests assert on them; the CLI reports them.
inline std::atomic<std::uint64_t>& radicand_clamps() {
  static std::atomic<std::uint64_t> c{0};
  return c;
}
inline std::atomic<std::uint64_t>& conditioning_warnings() {
  static std::atomic<std::uint64_t> c{0};
  return c;
}
inline std::atomic<std::uint64_t>& prior_bound_violations() {
  static std::atomic<std::uint64_t> c{0};
  return c;
}
inline void reset_counters() {
  radicand_clamps() = 0;
  conditioning_warnings() = 0;
  prior_bound_violations() = 0;
}

}  // namespace diag

// splitmix64: used to derive independent substream seeds from a master seed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Seed for a given replicate/substream.  Counter-based so that replicates can
// be computed in any order (or in parallel) and still reproduce bit-for-bit.
inline std::uint64_t substream_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t s = master;
  std::uint64_t a = splitmix64(s);
  std::uint64_t t = master ^ (0x9e3779b97f4a7c15ull * (index + 1));
  std::uint64_t b = splitmix64(t);
  return a ^ b;
}

// xoshiro256++ with explicit uniform/normal transforms.  The engine and the
// transforms are fully specified here, so streams are identical across
// platforms and standard-library versions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t s = seed;
    for (auto& word : state_) word = splitmix64(s);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform on [0,1) with 53-bit resolution.
  double uniform01() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0,1): never returns exactly 0.
  double uniform01_open() {
    double u;
    do {
      u = uniform01();
    } while (u <= 0.0);
    return u;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  std::uint64_t uniform_int(std::uint64_t n) {
    // Lemire-style rejection-free enough for our n (n << 2^64): use
    // multiply-shift with rejection to stay exactly uniform.
    std::uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < n) {
      const std::uint64_t t = (0 - n) % n;
      while (lo < t) {
        x = next_u64();
        m = static_cast<__uint128_t>(x) * n;
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  // Box-Muller without caching: each call consumes exactly two uniforms.
  double normal() {
    const double u1 = uniform01_open();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return r * std::cos(6.283185307179586476925286766559 * u2);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  std::uint64_t state_[4];
};

}  // namespace krigor
