#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace bdann {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool empty() const { return data.empty(); }
  std::size_t size() const { return data.size(); }

  bool operator==(const Matrix&) const = default;
};

/// Copies the listed rows of `m` into a new matrix, in order.
Matrix select_rows(const Matrix& m, std::span<const std::size_t> idx);
Vector select(const Vector& v, std::span<const std::size_t> idx);

/// Stacks `b` under `a`; column counts must match.
Matrix vstack(const Matrix& a, const Matrix& b);

}  // namespace bdann
