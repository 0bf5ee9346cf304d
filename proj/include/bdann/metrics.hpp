#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "bdann/bayes.hpp"

namespace bdann {

/// Six-metric error suite; relative errors are in percent.
struct MetricsReport {
  double mu_error_pct = 0.0;
  double max_error_pct = 0.0;
  double std_error_pct = 0.0;  // population std of the relative errors
  double rrmse_pct = 0.0;      // sqrt(mean(eps^2))
  double p_over_10_pct = 0.0;  // share of eps strictly above 10 %
  double r2 = 0.0;
};

/// Metric names in report order, e.g. "mu_error_pct".
std::span<const std::string_view> metric_names();
/// Value of the metric at position i in metric_names().
double metric_value(const MetricsReport& r, std::size_t i);
void set_metric_value(MetricsReport& r, std::size_t i, double v);

/// Throws DataError naming the row when a true value is zero.
MetricsReport error_metrics(std::span<const double> y_true, std::span<const double> y_pred);

enum class UncertaintySource { epistemic, aleatoric, total };
std::string_view to_string(UncertaintySource s);
double select_std(const PredictiveSummary& s, UncertaintySource src);

struct CalibrationResult {
  std::vector<std::pair<double, double>> curve;  // (expected level, empirical fraction)
  double miscalibration_area = 0.0;
  UncertaintySource source = UncertaintySource::total;
  std::size_t excluded = 0;  // rows dropped for a zero std
  std::size_t used = 0;
};

/// 101 evenly spaced levels in [0.005, 0.995].
std::vector<double> calibration_levels();

/// Empirical CDF of (y - mean) / std evaluated at standard-normal quantiles of
/// each level; the area is the trapezoid integral of |empirical - level|.
CalibrationResult calibration(std::span<const double> y_true,
                              std::span<const PredictiveSummary> summaries,
                              UncertaintySource source);
/// Same computation from explicit means and stds.
CalibrationResult calibration(std::span<const double> y_true, std::span<const double> mean,
                              std::span<const double> std, UncertaintySource source);

double standard_normal_quantile(double p);

struct RstdDistribution {
  std::vector<double> values;        // rStd in percent, one per retained row
  std::vector<double> bin_edges;     // bins + 1 edges
  std::vector<std::size_t> counts;   // bins
  double min = 0.0, max = 0.0, mean = 0.0, skewness = 0.0;
  std::size_t excluded = 0;          // rows with a zero predicted mean
};

RstdDistribution rstd_distribution(std::span<const PredictiveSummary> summaries,
                                   std::size_t bins = 20);
/// Population moment skewness; 0 for constant input.
double skewness(std::span<const double> v);

}  // namespace bdann
