#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace vpfa {

// Seeded pseudorandom stream used by every stochastic step in the toolkit.
//
// The draws are fully specified so that another implementation can reproduce
// them bit for bit:
//   * engine: std::mt19937_64 (its output sequence is fixed by the standard);
//   * uniform(): top 53 bits of one engine output, scaled by 2^-53, in [0, 1);
//   * normal(): Marsaglia polar method over pairs of uniform() draws mapped to
//     (-1, 1); the second variate of each accepted pair is cached;
//   * below(n): rejection sampling on a 64-bit draw (no modulo bias);
//   * shuffle(): Fisher-Yates from the back, swapping i with below(i + 1).
// The std:: distributions are avoided because their algorithms are
// implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  double uniform();
  double normal();
  std::size_t below(std::size_t n);

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = below(i);
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// SplitMix64 finalizer over (seed, stream): independent substreams from one
// user-visible seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace vpfa
