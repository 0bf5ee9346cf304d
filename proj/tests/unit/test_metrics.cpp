#include <gtest/gtest.h>

#include <cmath>

#include "bdann/errors.hpp"
#include "bdann/metrics.hpp"
#include "gen.hpp"
#include "oracles.hpp"

using namespace bdann;
using bdann::testing::Gen;

TEST(ErrorMetrics, MatchBruteForceOnRandomInstances) {
  Gen g(1);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = g.size(2, 80);
    Vector y(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = (g.coin() ? 1 : -1) * g.real(0.1, 10);
      p[i] = y[i] * (1 + g.normal(0.15));
    }
    const auto r = error_metrics(y, p);
    const auto o = bdann::testing::metrics_oracle(y, p);
    EXPECT_NEAR(r.mu_error_pct, o.mu, 1e-10);
    EXPECT_NEAR(r.max_error_pct, o.max, 1e-10);
    EXPECT_NEAR(r.std_error_pct, o.sd, 1e-10);
    EXPECT_NEAR(r.rrmse_pct, o.rrmse, 1e-10);
    EXPECT_NEAR(r.p_over_10_pct, o.p10, 1e-10);
    EXPECT_NEAR(r.r2, o.r2, 1e-10);
  }
}

TEST(ErrorMetrics, HandValues) {
  const auto r = error_metrics(Vector{10.0, 2.0, 4.0, 5.0}, Vector{11.0, 2.0, 3.0, 5.0});
  EXPECT_NEAR(r.mu_error_pct, (10.0 + 0 + 25.0 + 0) / 4, 1e-12);
  EXPECT_NEAR(r.max_error_pct, 25.0, 1e-12);
  EXPECT_NEAR(r.p_over_10_pct, 25.0, 1e-12);  // 10 % itself is not strictly above
  const auto perfect = error_metrics(Vector{1, 2, 3}, Vector{1, 2, 3});
  EXPECT_EQ(perfect.mu_error_pct, 0.0);
  EXPECT_EQ(perfect.r2, 1.0);
}

TEST(ErrorMetrics, Errors) {
  EXPECT_THROW(error_metrics(Vector{1, 0}, Vector{1, 1}), DataError);
  EXPECT_THROW(error_metrics(Vector{1}, Vector{1, 1}), ShapeError);
  EXPECT_THROW(error_metrics(Vector{}, Vector{}), InvalidArgument);
}

TEST(ErrorMetrics, NamesAndAccessorsAgree) {
  MetricsReport r;
  ASSERT_EQ(metric_names().size(), 6u);
  EXPECT_EQ(metric_names()[0], "mu_error_pct");
  for (std::size_t i = 0; i < 6; ++i) set_metric_value(r, i, 1.5 * i);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(metric_value(r, i), 1.5 * i);
  EXPECT_EQ(r.r2, 7.5);
  EXPECT_THROW(metric_value(r, 6), InvalidArgument);
}

TEST(Calibration, MatchesBruteForceOnRandomInstances) {
  Gen g(2);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = g.size(1, 60);
    Vector y(n), m(n), s(n);
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = g.real(-2, 2);
      s[i] = g.coin(0.05) ? 0.0 : g.real(0.05, 2);
      y[i] = m[i] + g.normal(g.real(0.3, 3));
    }
    bool any = false;
    for (double v : s) any |= v > 0;
    if (!any) continue;
    const auto r = calibration(y, m, s, UncertaintySource::total);
    EXPECT_NEAR(r.miscalibration_area, bdann::testing::calibration_area_oracle(y, m, s), 1e-10);
    std::size_t zero = 0;
    for (double v : s) zero += v == 0.0;
    EXPECT_EQ(r.excluded, zero);
    EXPECT_EQ(r.used, n - zero);
  }
}

TEST(Calibration, PerfectStreamHasSmallArea) {
  Gen g(3);
  const std::size_t n = 10000;
  Vector y(n), m(n), s(n);
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = g.real(-5, 5);
    s[i] = g.real(0.1, 3);
    y[i] = m[i] + s[i] * g.normal();
  }
  EXPECT_LT(calibration(y, m, s, UncertaintySource::total).miscalibration_area, 0.03);
}

TEST(Calibration, CurveShapeAndErrors) {
  const auto lv = calibration_levels();
  ASSERT_EQ(lv.size(), 101u);
  EXPECT_NEAR(lv.front(), 0.005, 1e-15);
  EXPECT_NEAR(lv.back(), 0.995, 1e-15);
  // Every residual far above its mean: the empirical CDF stays at zero.
  const auto r = calibration(Vector{10, 10}, Vector{0, 0}, Vector{1, 1}, UncertaintySource::epistemic);
  for (const auto& [p, f] : r.curve) EXPECT_EQ(f, 0.0);
  EXPECT_NEAR(r.miscalibration_area, 0.5 * (0.995 * 0.995 - 0.005 * 0.005), 1e-12);
  EXPECT_THROW(calibration(Vector{1}, Vector{1}, Vector{0}, UncertaintySource::total), DataError);
  EXPECT_THROW(calibration(Vector{1, 2}, Vector{1}, Vector{1}, UncertaintySource::total), ShapeError);
}

TEST(Calibration, SourceSelection) {
  PredictiveSummary s{1.0, 0.3, 0.4, 0.5, 10};
  EXPECT_EQ(select_std(s, UncertaintySource::epistemic), 0.3);
  EXPECT_EQ(select_std(s, UncertaintySource::aleatoric), 0.4);
  EXPECT_EQ(select_std(s, UncertaintySource::total), 0.5);
  EXPECT_EQ(to_string(UncertaintySource::aleatoric), "aleatoric");
}

TEST(NormalQuantile, AgreesWithBisection) {
  Gen g(4);
  for (int t = 0; t < 200; ++t) {
    const double p = g.real(1e-6, 1 - 1e-6);
    EXPECT_NEAR(standard_normal_quantile(p), bdann::testing::normal_quantile_bisect(p), 1e-9);
  }
  EXPECT_THROW(standard_normal_quantile(1.0), InvalidArgument);
}

TEST(Rstd, DistributionSummary) {
  std::vector<PredictiveSummary> s;
  for (int i = 1; i <= 10; ++i) s.push_back({10.0, 0, 0, static_cast<double>(i), 1});
  s.push_back({0.0, 0, 0, 1.0, 1});
  const auto d = rstd_distribution(s, 5);
  EXPECT_EQ(d.excluded, 1u);
  ASSERT_EQ(d.values.size(), 10u);
  EXPECT_NEAR(d.min, 10.0, 1e-12);
  EXPECT_NEAR(d.max, 100.0, 1e-12);
  EXPECT_NEAR(d.mean, 55.0, 1e-12);
  EXPECT_NEAR(d.skewness, 0.0, 1e-12);
  std::size_t total = 0;
  for (auto c : d.counts) total += c;
  EXPECT_EQ(total, 10u);
  EXPECT_EQ(d.bin_edges.size(), 6u);
  EXPECT_THROW(rstd_distribution(s, 0), InvalidArgument);
}

TEST(Rstd, SkewnessSignAndConstantInput) {
  EXPECT_EQ(skewness(Vector{2, 2, 2}), 0.0);
  EXPECT_GT(skewness(Vector{1, 1, 1, 1, 10}), 0.0);
  EXPECT_LT(skewness(Vector{-10, 1, 1, 1, 1}), 0.0);
}
