#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "bdann/matrix.hpp"

namespace bdann {

/// Two-component principal-axis projection fitted on training rows.
struct Pca2d {
  Vector mean;
  Matrix components;  // 2 x d, orthonormal rows
  std::array<double, 2> explained_variance{};
  std::array<double, 2> explained_variance_ratio{};

  Matrix project(const Matrix& points) const;
};

/// Top-2 eigenvectors of the sample covariance. Each component is signed so
/// its largest-magnitude entry is positive. Throws InvalidArgument for fewer
/// than 3 rows and DataError when the centred data has rank < 2.
Pca2d pca_2d(const Matrix& train_X);

struct HullMembership {
  std::vector<bool> inside;
  bool degenerate = false;  // training rows do not span the full dimension
  std::size_t rank = 0;     // affine rank of the training rows
  std::size_t outside_count() const;
};

/// A query is inside iff it is a convex combination of the training rows,
/// decided per query by a phase-one simplex feasibility solve. Degenerate
/// training sets are flagged; membership is then relative to their affine hull.
HullMembership hull_membership(const Matrix& train_X, const Matrix& query_points,
                               double tol = 1e-9);

/// Single-query form of the feasibility test.
bool in_convex_hull(const Matrix& train_X, std::span<const double> query, double tol = 1e-9);

}  // namespace bdann
