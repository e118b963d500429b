#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <utility>

namespace frec {

/// Seedable generator used for every random decision in the library.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. The conversions below are written out by hand because the
/// standard distributions are implementation-defined:
///   uniform()        = (next() >> 11) * 2^-53, in [0, 1)
///   uniform_int(n)   = rejection sampling on next() against the largest
///                      multiple of n, then modulo n
class Rng {
 public:
  static constexpr std::uint64_t default_seed = 20240117;

  explicit Rng(std::uint64_t seed = default_seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::uint64_t uniform_int(std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t r = next();
    while (r >= limit) r = next();
    return r % n;
  }

  /// Fisher-Yates, last element first.
  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = uniform_int(i);
      std::swap(items[i - 1], items[j]);
    }
  }

  /// Independent stream for a named purpose, derived with a splitmix64 step.
  static Rng derive(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return Rng(z ^ (z >> 31));
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace frec
