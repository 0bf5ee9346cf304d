#include "bdann/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include <boost/math/distributions/normal.hpp>

#include "bdann/errors.hpp"

namespace bdann {

namespace {

constexpr std::array<std::string_view, 6> kMetricNames = {
    "mu_error_pct", "max_error_pct", "std_error_pct", "rrmse_pct", "p_over_10_pct", "r2"};

}  // namespace

std::span<const std::string_view> metric_names() { return kMetricNames; }

double metric_value(const MetricsReport& r, std::size_t i) {
  switch (i) {
    case 0: return r.mu_error_pct;
    case 1: return r.max_error_pct;
    case 2: return r.std_error_pct;
    case 3: return r.rrmse_pct;
    case 4: return r.p_over_10_pct;
    case 5: return r.r2;
  }
  throw InvalidArgument("metric index out of range");
}

void set_metric_value(MetricsReport& r, std::size_t i, double v) {
  switch (i) {
    case 0: r.mu_error_pct = v; return;
    case 1: r.max_error_pct = v; return;
    case 2: r.std_error_pct = v; return;
    case 3: r.rrmse_pct = v; return;
    case 4: r.p_over_10_pct = v; return;
    case 5: r.r2 = v; return;
  }
  throw InvalidArgument("metric index out of range");
}

MetricsReport error_metrics(std::span<const double> y_true, std::span<const double> y_pred) {
  if (y_true.size() != y_pred.size()) throw ShapeError("error_metrics: length mismatch");
  if (y_true.empty()) throw InvalidArgument("error_metrics: empty input");
  const std::size_t n = y_true.size();
  const double dn = static_cast<double>(n);
  std::vector<double> eps(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (y_true[i] == 0.0)
      throw DataError("error_metrics: true value is zero at row " + std::to_string(i));
    eps[i] = std::abs(y_true[i] - y_pred[i]) / std::abs(y_true[i]) * 100.0;
  }
  MetricsReport r;
  double sum = 0.0, sum_sq = 0.0;
  std::size_t over = 0;
  for (double e : eps) {
    sum += e;
    sum_sq += e * e;
    r.max_error_pct = std::max(r.max_error_pct, e);
    if (e > 10.0) ++over;
  }
  r.mu_error_pct = sum / dn;
  double dev = 0.0;
  for (double e : eps) dev += (e - r.mu_error_pct) * (e - r.mu_error_pct);
  r.std_error_pct = std::sqrt(dev / dn);
  r.rrmse_pct = std::sqrt(sum_sq / dn);
  r.p_over_10_pct = 100.0 * static_cast<double>(over) / dn;

  double ybar = 0.0;
  for (double y : y_true) ybar += y;
  ybar /= dn;
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ss_res += (y_true[i] - y_pred[i]) * (y_true[i] - y_pred[i]);
    ss_tot += (y_true[i] - ybar) * (y_true[i] - ybar);
  }
  r.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res == 0.0 ? 1.0 : 0.0);
  return r;
}

std::string_view to_string(UncertaintySource s) {
  switch (s) {
    case UncertaintySource::epistemic: return "epistemic";
    case UncertaintySource::aleatoric: return "aleatoric";
    case UncertaintySource::total: return "total";
  }
  return "total";
}

double select_std(const PredictiveSummary& s, UncertaintySource src) {
  switch (src) {
    case UncertaintySource::epistemic: return s.epistemic_std;
    case UncertaintySource::aleatoric: return s.aleatoric_std;
    case UncertaintySource::total: return s.total_std;
  }
  return s.total_std;
}

double standard_normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidArgument("standard_normal_quantile: p outside (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(0.0, 1.0), p);
}

std::vector<double> calibration_levels() {
  std::vector<double> levels(101);
  for (std::size_t k = 0; k < levels.size(); ++k)
    levels[k] = 0.005 + 0.99 * static_cast<double>(k) / 100.0;
  return levels;
}

CalibrationResult calibration(std::span<const double> y_true, std::span<const double> mean,
                              std::span<const double> std, UncertaintySource source) {
  if (y_true.size() != mean.size() || y_true.size() != std.size())
    throw ShapeError("calibration: length mismatch");
  CalibrationResult res;
  res.source = source;
  std::vector<double> z;
  z.reserve(y_true.size());
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (!(std[i] > 0.0)) {
      ++res.excluded;
      continue;
    }
    z.push_back((y_true[i] - mean[i]) / std[i]);
  }
  res.used = z.size();
  if (z.empty()) throw DataError("calibration: no rows with a positive std");
  std::sort(z.begin(), z.end());
  const double n = static_cast<double>(z.size());
  const auto levels = calibration_levels();
  for (double p : levels) {
    const double q = standard_normal_quantile(p);
    const auto below = std::upper_bound(z.begin(), z.end(), q) - z.begin();
    res.curve.emplace_back(p, static_cast<double>(below) / n);
  }
  for (std::size_t k = 1; k < res.curve.size(); ++k) {
    const double h = res.curve[k].first - res.curve[k - 1].first;
    const double g0 = std::abs(res.curve[k - 1].second - res.curve[k - 1].first);
    const double g1 = std::abs(res.curve[k].second - res.curve[k].first);
    res.miscalibration_area += 0.5 * h * (g0 + g1);
  }
  return res;
}

CalibrationResult calibration(std::span<const double> y_true,
                              std::span<const PredictiveSummary> summaries,
                              UncertaintySource source) {
  std::vector<double> mean, sd;
  mean.reserve(summaries.size());
  sd.reserve(summaries.size());
  for (const auto& s : summaries) {
    mean.push_back(s.mean);
    sd.push_back(select_std(s, source));
  }
  return calibration(y_true, mean, sd, source);
}

double skewness(std::span<const double> v) {
  if (v.empty()) return 0.0;
  const double n = static_cast<double>(v.size());
  double m = 0.0;
  for (double x : v) m += x;
  m /= n;
  double m2 = 0.0, m3 = 0.0;
  for (double x : v) {
    const double d = x - m;
    m2 += d * d;
    m3 += d * d * d;
  }
  m2 /= n;
  m3 /= n;
  if (m2 <= 0.0) return 0.0;
  return m3 / std::pow(m2, 1.5);
}

RstdDistribution rstd_distribution(std::span<const PredictiveSummary> summaries, std::size_t bins) {
  if (bins == 0) throw InvalidArgument("rstd_distribution: bins must be positive");
  RstdDistribution d;
  for (const auto& s : summaries) {
    if (s.mean == 0.0) {
      ++d.excluded;
      continue;
    }
    d.values.push_back(s.total_std / std::abs(s.mean) * 100.0);
  }
  if (d.values.empty()) return d;
  const auto [mn, mx] = std::minmax_element(d.values.begin(), d.values.end());
  d.min = *mn;
  d.max = *mx;
  double sum = 0.0;
  for (double v : d.values) sum += v;
  d.mean = sum / static_cast<double>(d.values.size());
  d.skewness = skewness(d.values);
  d.bin_edges.resize(bins + 1);
  const double width = (d.max - d.min) / static_cast<double>(bins);
  for (std::size_t b = 0; b <= bins; ++b) d.bin_edges[b] = d.min + width * static_cast<double>(b);
  d.counts.assign(bins, 0);
  for (double v : d.values) {
    std::size_t b = width > 0.0 ? static_cast<std::size_t>((v - d.min) / width) : 0;
    d.counts[std::min(b, bins - 1)] += 1;
  }
  return d;
}

}  // namespace bdann
