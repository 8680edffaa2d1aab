#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace mjscc {

/// Seeded generator with platform-independent draws.
///
/// std::mt19937_64 is bit-specified by the standard; the distributions below
/// are written out by hand because the std:: distributions are not.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Fills out[0..n) with uniform(lo, hi); same draws as calling it n times.
  void fill_uniform(double* out, std::size_t n, double lo, double hi);
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller (caches the second variate).
  double normal();

  /// Independent stream derived from this seed and a stream id.
  Rng fork(std::uint64_t stream) const;

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mjscc
