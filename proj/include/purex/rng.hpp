#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace purex {

/// Seeded random stream backed by std::mt19937_64.
///
/// Uniform reals take the top 53 bits of one engine draw, integers in [0, n)
/// use a 128-bit multiply-shift, so streams are identical on every platform
/// with a conforming mt19937_64. `split(k)` derives an independent stream from
/// the seed and `k` only, never from the current position, which is what
/// makes per-bag generation order-independent.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }
  double uniform();                        // [0, 1)
  double uniform(double lo, double hi);    // [lo, hi)
  std::size_t index(std::size_t n);        // [0, n), n > 0
  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[index(i)]);
    }
  }

  Rng split(std::uint64_t stream) const;

  // Text form of the full engine state (seed first).
  std::string serialize() const;
  static Rng deserialize(const std::string& text);

  bool operator==(const Rng& other) const {
    return seed_ == other.seed_ && engine_ == other.engine_;
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace purex
