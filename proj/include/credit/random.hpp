#pragma once

#include <cstdint>
#include <random>
#include <span>

#include "credit/error.hpp"

namespace credit {

namespace detail {

// splitmix64 finalizer; used to spread (seed, stream) pairs over the mt19937_64 seed space.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Deterministic random stream. Only the raw mt19937_64 output is used (its sequence is fixed by
/// the standard), so sampled trajectories are identical across compilers and standard libraries.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream), engine_(detail::mix64(seed ^ detail::mix64(stream + 1))) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }

  /// Independent stream for the same seed (e.g. one per learner component or per run).
  RngStream derive(std::uint64_t stream) const { return RngStream(seed_, detail::mix64(stream_) ^ stream); }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  std::size_t uniform_index(std::size_t n) {
    if (n == 0) throw DomainError("uniform_index: empty range");
    auto i = static_cast<std::size_t>(uniform() * static_cast<double>(n));
    return i < n ? i : n - 1;
  }

  /// Inverse-CDF draw from an (unnormalized is fine) nonnegative weight vector.
  std::size_t categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) throw DomainError("categorical: weights must have positive mass");
    const double u = uniform() * total;
    double acc = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (weights[i] <= 0.0) continue;
      acc += weights[i];
      last_positive = i;
      if (u < acc) return i;
    }
    return last_positive;
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
};

}  // namespace credit
