#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace flexgrid {

/// splitmix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t z)
{
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// FNV-1a, stable across platforms (std::hash is not).
constexpr std::uint64_t stable_hash(std::string_view s)
{
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Seedable generator with reproducible output on every platform.
///
/// Wraps std::mt19937_64 (whose output sequence is fixed by the standard) and
/// implements the distributions itself, because the standard library
/// distributions are implementation-defined. Independent streams are derived
/// with `stream()`: the child seed is mix64(parent_seed ^ mix64(hash(name) + index)),
/// so every unit, device or series draws from its own sequence regardless of
/// the order in which other units are generated.
class Rng
{
public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(mix64(seed)) {}

  std::uint64_t seed() const { return seed_; }

  Rng stream(std::string_view name, std::uint64_t index = 0) const
  {
    return Rng(mix64(seed_ ^ mix64(stable_hash(name) + index)));
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Exponential with the given mean (inverse CDF). mean == 0 yields 0.
  double exponential(double mean) { return -mean * std::log1p(-uniform()); }

  /// Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n) { return n == 0 ? 0 : static_cast<std::uint64_t>(uniform() * static_cast<double>(n)); }

  /// Standard normal via Box-Muller (one value per call).
  double normal()
  {
    double const u1 = 1.0 - uniform();
    double const u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

} // namespace flexgrid
