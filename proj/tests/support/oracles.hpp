#pragma once

// Brute-force reference implementations used as test oracles. Each is written
// from the definition and shares no code with the library.

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

namespace bdann::testing {

/// Mann-Whitney AUC by counting every (positive, negative) pair, ties half.
inline double auc_pairs(const std::vector<double>& s, const std::vector<double>& l) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (l[i] == 1.0 && l[j] == 0.0) {
        den += 1;
        num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
  return num / den;
}

struct MetricOracle {
  double mu, max, sd, rrmse, p10, r2;
};

inline MetricOracle metrics_oracle(const std::vector<double>& y, const std::vector<double>& p) {
  const std::size_t n = y.size();
  std::vector<long double> e(n);
  for (std::size_t i = 0; i < n; ++i) e[i] = 100.0L * std::fabs((long double)y[i] - p[i]) / std::fabs((long double)y[i]);
  long double mu = 0, mx = 0, sq = 0, over = 0;
  for (auto v : e) {
    mu += v;
    mx = std::max(mx, v);
    sq += v * v;
    over += v > 10.0L ? 1 : 0;
  }
  mu /= n;
  long double var = 0;
  for (auto v : e) var += (v - mu) * (v - mu);
  long double ym = 0;
  for (double v : y) ym += v;
  ym /= n;
  long double res = 0, tot = 0;
  for (std::size_t i = 0; i < n; ++i) {
    res += ((long double)y[i] - p[i]) * ((long double)y[i] - p[i]);
    tot += (y[i] - ym) * (y[i] - ym);
  }
  return {(double)mu, (double)mx, (double)std::sqrt(var / n), (double)std::sqrt(sq / n),
          (double)(100.0L * over / n), (double)(1.0L - res / tot)};
}

/// Standard-normal quantile by bisection on the CDF.
inline double normal_quantile_bisect(double p) {
  double lo = -40, hi = 40;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (0.5 * std::erfc(-mid / std::sqrt(2.0)) < p)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

/// Miscalibration area: trapezoid integral of |empirical - expected| over
/// levels 0.005 + 0.99 k / 100, k = 0..100. Rows with std <= 0 are skipped.
inline double calibration_area_oracle(const std::vector<double>& y, const std::vector<double>& mean,
                                      const std::vector<double>& sd) {
  std::vector<double> lv, gap;
  std::size_t used = 0;
  for (double s : sd) used += s > 0.0;
  for (int k = 0; k <= 100; ++k) {
    const double p = 0.005 + 0.99 * k / 100.0;
    const double q = normal_quantile_bisect(p);
    std::size_t below = 0;
    for (std::size_t i = 0; i < y.size(); ++i)
      if (sd[i] > 0.0 && (y[i] - mean[i]) / sd[i] <= q) ++below;
    lv.push_back(p);
    gap.push_back(std::fabs(double(below) / double(used) - p));
  }
  double area = 0;
  for (std::size_t k = 1; k < lv.size(); ++k) area += (lv[k] - lv[k - 1]) * (gap[k] + gap[k - 1]) / 2;
  return area;
}

using Pt = std::array<double, 2>;

inline double cross(const Pt& o, const Pt& a, const Pt& b) {
  return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
}

/// Andrew's monotone chain, counter-clockwise, collinear points dropped.
inline std::vector<Pt> convex_hull_2d(std::vector<Pt> pts) {
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  std::vector<Pt> h(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(h[k - 2], h[k - 1], p) <= 0) --k;
    h[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(h[k - 2], h[k - 1], pts[i]) <= 0) --k;
    h[k++] = pts[i];
  }
  h.resize(k - 1);
  return h;
}

/// Point in a counter-clockwise convex polygon, boundary inclusive.
inline bool inside_polygon(const std::vector<Pt>& hull, const Pt& q, double tol = 1e-12) {
  for (std::size_t i = 0; i < hull.size(); ++i)
    if (cross(hull[i], hull[(i + 1) % hull.size()], q) < -tol) return false;
  return true;
}

}  // namespace bdann::testing
