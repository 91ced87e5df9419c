#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "replysent/errors.hpp"

namespace replysent::nn {

// Deterministic random stream. The engine is std::mt19937_64, whose output
// sequence is fixed by the standard; all value mappings below are done by
// hand so that a given (seed, algorithm) pair produces the same sequence on
// every platform and standard library.
class RngStream {
public:
  explicit RngStream(std::uint64_t seed, std::string algorithm = "mt19937_64")
      : seed_(seed), algorithm_(std::move(algorithm)), engine_(seed) {
    if (algorithm_ != "mt19937_64") {
      throw ConfigError("RngStream: unknown algorithm id '" + algorithm_ + "'");
    }
  }

  std::uint64_t seed() const { return seed_; }
  const std::string& algorithm() const { return algorithm_; }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + uniform() * (hi - lo); }

  bool bernoulli(double p) { return uniform() < p; }

  // Unbiased integer in [0, n) via rejection sampling.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw NumericError("RngStream::below: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

private:
  std::uint64_t seed_;
  std::string algorithm_;
  std::mt19937_64 engine_;
};

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}
}  // namespace detail

// Derives a per-purpose sub-seed from a base seed. Ensures all randomness in
// a run flows from one root seed while stages remain independently rerunnable.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view purpose) {
  return detail::splitmix64(base ^ detail::fnv1a64(purpose));
}

}  // namespace replysent::nn
