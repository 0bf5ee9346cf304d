#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "bdann/errors.hpp"
#include "bdann/geometry.hpp"

namespace bdann {

namespace {

// Phase-one simplex on  [X^T; 1^T] lambda = [q; 1],  lambda >= 0.
// Returns the minimal sum of artificial variables (0 when feasible).
double phase_one_residual(const Matrix& train_X, std::span<const double> q) {
  const std::size_t n = train_X.rows;
  const std::size_t m = train_X.cols + 1;
  const std::size_t cols = n + m;  // structural + artificial
  const std::size_t rhs = cols;
  // Tableau rows 0..m-1 are constraints, row m is the reduced-cost row.
  std::vector<double> T((m + 1) * (cols + 1), 0.0);
  auto at = [&](std::size_t r, std::size_t c) -> double& { return T[r * (cols + 1) + c]; };

  for (std::size_t r = 0; r < m; ++r) {
    const double b = r < train_X.cols ? q[r] : 1.0;
    const double sign = b < 0.0 ? -1.0 : 1.0;
    for (std::size_t j = 0; j < n; ++j) at(r, j) = sign * (r < train_X.cols ? train_X(j, r) : 1.0);
    at(r, n + r) = 1.0;
    at(r, rhs) = sign * b;
  }
  std::vector<std::size_t> basis(m);
  for (std::size_t r = 0; r < m; ++r) basis[r] = n + r;
  for (std::size_t c = 0; c <= cols; ++c) {
    if (c >= n && c < cols) continue;
    double s = 0.0;
    for (std::size_t r = 0; r < m; ++r) s += at(r, c);
    at(m, c) = -s;
  }

  constexpr double kPivotTol = 1e-12;
  const std::size_t max_iter = 50 * (cols + m);
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    // Bland's rule: lowest-index improving column.
    std::size_t enter = cols;
    for (std::size_t c = 0; c < cols; ++c)
      if (at(m, c) < -kPivotTol) {
        enter = c;
        break;
      }
    if (enter == cols) break;
    std::size_t leave = m;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < m; ++r) {
      const double a = at(r, enter);
      if (a > kPivotTol) {
        const double ratio = at(r, rhs) / a;
        if (ratio < best - 1e-15 || (std::abs(ratio - best) <= 1e-15 && leave < m && basis[r] < basis[leave])) {
          best = ratio;
          leave = r;
        }
      }
    }
    if (leave == m) break;  // unbounded direction; cannot occur for a bounded phase-one
    const double piv = at(leave, enter);
    for (std::size_t c = 0; c <= cols; ++c) at(leave, c) /= piv;
    for (std::size_t r = 0; r <= m; ++r) {
      if (r == leave) continue;
      const double f = at(r, enter);
      if (f == 0.0) continue;
      for (std::size_t c = 0; c <= cols; ++c) at(r, c) -= f * at(leave, c);
    }
    basis[leave] = enter;
  }
  return -at(m, rhs);
}

std::size_t affine_rank(const Matrix& train_X) {
  if (train_X.rows < 2) return 0;
  const auto n = static_cast<Eigen::Index>(train_X.rows);
  const auto d = static_cast<Eigen::Index>(train_X.cols);
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> X(
      train_X.data.data(), n, d);
  const Eigen::MatrixXd C = X.rowwise() - X.row(0);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(C);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) == 0.0) return 0;
  std::size_t r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > 1e-10 * sv(0)) ++r;
  return r;
}

}  // namespace

std::size_t HullMembership::outside_count() const {
  return static_cast<std::size_t>(std::count(inside.begin(), inside.end(), false));
}

bool in_convex_hull(const Matrix& train_X, std::span<const double> query, double tol) {
  if (train_X.rows == 0) throw InvalidArgument("in_convex_hull: no training rows");
  if (query.size() != train_X.cols) throw ShapeError("in_convex_hull: dimension mismatch");
  double scale = 1.0;
  for (double v : query) scale = std::max(scale, std::abs(v));
  return phase_one_residual(train_X, query) <= tol * scale;
}

HullMembership hull_membership(const Matrix& train_X, const Matrix& query_points, double tol) {
  if (train_X.rows == 0) throw InvalidArgument("hull_membership: no training rows");
  if (query_points.cols != train_X.cols) throw ShapeError("hull_membership: dimension mismatch");
  HullMembership res;
  res.rank = affine_rank(train_X);
  res.degenerate = res.rank < train_X.cols;
  res.inside.resize(query_points.rows);
  for (std::size_t i = 0; i < query_points.rows; ++i)
    res.inside[i] = in_convex_hull(train_X, query_points.row(i), tol);
  return res;
}

}  // namespace bdann
