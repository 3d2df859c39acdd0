#ifndef IAGCN_RNG_HPP
#define IAGCN_RNG_HPP

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace iagcn {

/// Seeded random stream with platform-independent derived distributions.
///
/// The standard distributions (uniform_int_distribution and friends) are
/// implementation-defined, so everything here is derived from the raw
/// mt19937_64 output, which the standard pins bit for bit.
class Rng {
public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
      : engine_(mix(seed, stream)) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n), unbiased (rejection on the top remainder).
  std::uint64_t uniform_index(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::swap(values[i - 1], values[uniform_index(i)]);
    }
  }

private:
  // SplitMix64 finaliser over (seed, stream) so nearby seeds give unrelated streams.
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::mt19937_64 engine_;
};

} // namespace iagcn

#endif // IAGCN_RNG_HPP
