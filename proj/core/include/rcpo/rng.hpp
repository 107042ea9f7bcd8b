#pragma once

#include <cstdint>
#include <random>

namespace rcpo {

/// Seeded random stream with explicit, implementation-independent
/// mappings so identical seeds reproduce bit-identical draws everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Independent sub-stream derived from a master seed and an index
  /// (used for per-record generation).
  static Rng substream(std::uint64_t master_seed, std::uint64_t index);

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform draw from the open interval (0,1).
  double uniform_open01() {
    // 53-bit mantissa, shifted off zero so log(u) and log(-log u) stay finite.
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double a, double b) { return a + (b - a) * uniform_open01(); }

  /// Standard Gumbel via inverse CDF.
  double gumbel() { return -std::log(-std::log(uniform_open01())); }

  /// Standard normal via Box-Muller.
  double normal() {
    const double u1 = uniform_open01();
    const double u2 = uniform_open01();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.141592653589793238462643383279502884 * u2);
  }

  /// Uniform index in [0, n), rejection-sampled to avoid modulo bias.
  std::size_t uniform_index(std::size_t n);

 private:
  std::mt19937_64 engine_;
};

}  // namespace rcpo
