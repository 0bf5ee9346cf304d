#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace bdann {

using Rng = std::mt19937_64;

/// Deterministic child seed for stream `stream` of `base` (splitmix64 mixing).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

inline Rng make_rng(std::uint64_t base, std::uint64_t stream) {
  return Rng(derive_seed(base, stream));
}

double uniform(Rng& rng, double lo, double hi);

/// Standard normal draw; no state is cached between calls.
double standard_normal(Rng& rng);

/// Random permutation of 0..n-1.
std::vector<std::size_t> permutation(std::size_t n, Rng& rng);

/// Uniform integer in [0, n).
std::size_t uniform_index(Rng& rng, std::size_t n);

}  // namespace bdann
