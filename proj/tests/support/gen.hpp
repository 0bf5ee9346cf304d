#pragma once

// Hand-rolled generators for property tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "bdann/matrix.hpp"
#include "bdann/net.hpp"

namespace bdann::testing {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  double normal(double sd = 1.0) { return std::normal_distribution<double>(0.0, sd)(rng_); }
  std::size_t size(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_);
  }
  bool coin(double p = 0.5) { return real(0.0, 1.0) < p; }

  Vector vector(std::size_t n, double lo = -1.0, double hi = 1.0) {
    Vector v(n);
    for (auto& x : v) x = real(lo, hi);
    return v;
  }
  Matrix matrix(std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
    Matrix m(r, c);
    for (auto& x : m.data) x = real(lo, hi);
    return m;
  }
  Vector labels(std::size_t n) {
    Vector v(n);
    for (auto& x : v) x = coin() ? 1.0 : 0.0;
    v[0] = 0.0;
    if (n > 1) v[1] = 1.0;
    return v;
  }

  /// Random topology: 1-3 hidden layers of smooth activations, single output.
  NetworkSpec smooth_spec(std::size_t in, std::size_t out = 1) {
    NetworkSpec s;
    s.layer_sizes.push_back(in);
    const std::size_t hidden = size(1, 3);
    for (std::size_t l = 0; l < hidden; ++l) {
      s.layer_sizes.push_back(size(2, 6));
      s.activations.push_back(coin() ? Activation::tanh : Activation::sigmoid);
    }
    s.layer_sizes.push_back(out);
    s.activations.push_back(Activation::identity);
    return s;
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace bdann::testing
