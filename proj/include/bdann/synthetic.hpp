#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "bdann/data.hpp"
#include "bdann/matrix.hpp"

namespace bdann {

inline constexpr std::size_t kSyntheticDim = 5;

/// Coefficients of the five-dimensional benchmark function.
struct DomainParams {
  std::array<double, 10> a{};
  std::array<double, 6> omega{};
  double kappa = 2.0;
  double noise_std = 0.05;

  static DomainParams source();
  static DomainParams target();
};

/// kappa * [a1 + a2 sin(w1 x1 + w2 x2) + a3 cos(w3 x1 x2) + a4 log(1 + x2^2) + a5 x3
///          + a6 x4^2 + a7 x5 + a8 sin(w4 x1 x3) + a9 cos(w5 x3 x4) + a10 sin(w6 (x1 + x5) x3)]
double base_function(std::span<const double> x, const DomainParams& p);

/// Input warp applied to target-domain samples before evaluation.
std::array<double, kSyntheticDim> target_warp(std::span<const double> x);

inline constexpr double kInputLow = 1.0;
inline constexpr double kInputHigh = 3.0;

/// Draws n rows with x ~ U[1, 3]^5 and y = f(x) (source) or f(g(x)) (target),
/// plus N(0, noise_std^2) noise. Outputs are unscaled.
DataSplit generate_domain(std::size_t n, Domain domain, std::uint64_t seed,
                          const DomainParams& params);
DataSplit generate_domain(std::size_t n, Domain domain, std::uint64_t seed);

/// Linear-interpolation empirical quantile, q in [0, 1].
double empirical_quantile(std::span<const double> values, double q);

/// Smooth monotone output map into roughly [1, 5]: a logistic between the 5th and
/// 95th percentiles, tangent-line continuation outside them.
struct QuantileSigmoidScaler {
  double q05 = 0.0;
  double q95 = 1.0;
  double center = 0.5;
  double alpha = 1.0;  // logistic steepness
  double delta = 0.1;  // s(q95) = 5 - delta

  double apply(double y) const;
  double invert(double s) const;
  /// d apply / dy
  double derivative(double y) const;
  Vector apply(std::span<const double> y) const;
  Vector invert(std::span<const double> s) const;
};

/// Requires at least 20 values; throws DataError when q05 == q95.
QuantileSigmoidScaler fit_quantile_sigmoid(std::span<const double> y_all, double delta = 0.1);

enum class ScalerPolicy { target_only, joint };

/// Per-feature standardisation with population standard deviations.
struct ZScoreScaler {
  Vector means;
  Vector stds;

  Matrix apply(const Matrix& X) const;
  Matrix invert(const Matrix& Z) const;
};

/// Throws DataError naming the column when a feature has zero variance.
ZScoreScaler fit_zscore(const Matrix& X);
/// target_only fits on the target rows; joint fits on source and target rows together.
ZScoreScaler fit_zscore(const Matrix& target_train, const Matrix& source_train, ScalerPolicy policy);

/// One-dimensional z-score used for scalar targets such as residuals.
struct ScalarScaler {
  double mean = 0.0;
  double std = 1.0;
  double apply(double v) const { return (v - mean) / std; }
  double invert(double z) const { return z * std + mean; }
  Vector apply(std::span<const double> v) const;
  Vector invert(std::span<const double> z) const;
};
ScalarScaler fit_scalar(std::span<const double> v);

struct BenchmarkOptions {
  std::size_t source_train = 5000;
  std::size_t source_val = 1000;
  std::size_t source_test = 1000;
  std::size_t target_val = 250;
  std::size_t target_test = 250;
  std::size_t target_pool = 500;
  std::size_t ablation_size = 500;
  /// Generate the target domain with the source generator (no shift).
  bool identical_domains = false;
};

/// Source/target partitions with outputs mapped through the fitted quantile scaler.
/// Features are left unstandardised; standardisation depends on the strategy.
struct Benchmark {
  DomainSplits source;
  DomainSplits target;
  QuantileSigmoidScaler output_scaler;
  std::uint64_t seed = 0;
  BenchmarkOptions options;
};

/// Valid ablation sizes are 75, 150, 250 and 500. Target training sets are nested
/// prefixes of one shuffled 500-row pool; val/test rows are shared by all sizes.
Benchmark make_benchmark(std::uint64_t seed, std::size_t ablation_size);
Benchmark make_benchmark(std::uint64_t seed, const BenchmarkOptions& options);

/// CSV with header x1..x5,y,domain,partition.
void write_split_csv(const std::filesystem::path& path, std::span<const DataSplit* const> splits);
/// Reads a CSV written by write_split_csv, keeping rows that match domain and partition.
DataSplit read_split_csv(const std::filesystem::path& path, Domain domain, Partition partition);

}  // namespace bdann
