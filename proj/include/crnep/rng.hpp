#ifndef CRNEP_RNG_HPP
#define CRNEP_RNG_HPP

#include <cstdint>
#include <random>

namespace crnep {

/**
 * Reproducible random source.
 *
 * Engine is std::mt19937_64, whose output sequence is fixed by the C++
 * standard. The transforms below are written out here because the standard
 * distribution classes are implementation-defined, so every draw is a pure
 * function of the seed on every platform.
 */
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on the open interval (0, 1), 53 bits of resolution.
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Exponential with the given rate (> 0).
  double exponential(double rate);

  /// Standard normal via Box-Muller; the second variate is cached.
  double normal();

  /// Poisson with the given mean, by inversion on chunks of mean <= 500.
  std::int64_t poisson(double mean);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Independent child seed for a named stream (splitmix64 of seed and stream).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace crnep

#endif  // CRNEP_RNG_HPP
