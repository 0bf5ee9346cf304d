#include "bdann/kernels.hpp"

#include <string>
#include <vector>

#include "bdann/errors.hpp"

namespace bdann::kernels {

namespace {

void check_forward(const Matrix& X, const Matrix& W, std::span<const double> b) {
  if (X.cols != W.cols || b.size() != W.rows)
    throw ShapeError("affine_forward: input has " + std::to_string(X.cols) +
                     " columns, weights expect " + std::to_string(W.cols));
}

void check_weight_grad(const Matrix& dZ, const Matrix& A, const Matrix& dW,
                       std::span<double> db) {
  if (dZ.rows != A.rows || dW.rows != dZ.cols || dW.cols != A.cols || db.size() != dZ.cols)
    throw ShapeError("weight_grad: inconsistent operand shapes");
}

void check_input_grad(const Matrix& dZ, const Matrix& W, const Matrix& dA) {
  if (dZ.cols != W.rows || dA.rows != dZ.rows || dA.cols != W.cols)
    throw ShapeError("input_grad: inconsistent operand shapes");
}

inline double dot_row(const double* x, const double* w, std::size_t n) {
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) acc += x[k] * w[k];
  return acc;
}

std::vector<double> transpose(const Matrix& W) {
  std::vector<double> t(W.size());
  for (std::size_t j = 0; j < W.rows; ++j)
    for (std::size_t k = 0; k < W.cols; ++k) t[k * W.rows + j] = W.data[j * W.cols + k];
  return t;
}

// Same per-element accumulation order as dot_row (k ascending from 0), laid
// out so the inner loop runs over independent outputs and vectorises.
inline void affine_row(const double* x, const double* wt, std::size_t in, std::size_t out,
                       const double* b, double* z) {
  for (std::size_t j = 0; j < out; ++j) z[j] = 0.0;
  for (std::size_t k = 0; k < in; ++k) {
    const double xk = x[k];
    const double* w = wt + k * out;
    for (std::size_t j = 0; j < out; ++j) z[j] += xk * w[j];
  }
  for (std::size_t j = 0; j < out; ++j) z[j] += b[j];
}

}  // namespace

namespace serial {

void affine_forward(const Matrix& X, const Matrix& W, std::span<const double> b, Matrix& Z) {
  check_forward(X, W, b);
  if (Z.rows != X.rows || Z.cols != W.rows) Z = Matrix(X.rows, W.rows);
  for (std::size_t i = 0; i < X.rows; ++i)
    for (std::size_t j = 0; j < W.rows; ++j)
      Z(i, j) = dot_row(&X.data[i * X.cols], &W.data[j * W.cols], X.cols) + b[j];
}

void weight_grad(const Matrix& dZ, const Matrix& A, Matrix& dW, std::span<double> db) {
  check_weight_grad(dZ, A, dW, db);
  for (std::size_t j = 0; j < dZ.cols; ++j) {
    double* wrow = &dW.data[j * dW.cols];
    for (std::size_t k = 0; k < dW.cols; ++k) wrow[k] = 0.0;
    double bsum = 0.0;
    for (std::size_t i = 0; i < dZ.rows; ++i) {
      const double g = dZ(i, j);
      const double* arow = &A.data[i * A.cols];
      for (std::size_t k = 0; k < A.cols; ++k) wrow[k] += g * arow[k];
      bsum += g;
    }
    db[j] = bsum;
  }
}

void input_grad(const Matrix& dZ, const Matrix& W, Matrix& dA) {
  check_input_grad(dZ, W, dA);
  for (std::size_t i = 0; i < dZ.rows; ++i) {
    double* arow = &dA.data[i * dA.cols];
    for (std::size_t k = 0; k < dA.cols; ++k) arow[k] = 0.0;
    for (std::size_t j = 0; j < dZ.cols; ++j) {
      const double g = dZ(i, j);
      const double* wrow = &W.data[j * W.cols];
      for (std::size_t k = 0; k < W.cols; ++k) arow[k] += g * wrow[k];
    }
  }
}

}  // namespace serial

namespace parallel {

void affine_forward(const Matrix& X, const Matrix& W, std::span<const double> b, Matrix& Z) {
  check_forward(X, W, b);
  if (Z.rows != X.rows || Z.cols != W.rows) Z = Matrix(X.rows, W.rows);
  const auto n = static_cast<std::ptrdiff_t>(X.rows);
  const bool big = X.rows * X.cols * W.rows >= kParallelWorkThreshold;
  const auto wt = transpose(W);
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto r = static_cast<std::size_t>(i);
    affine_row(&X.data[r * X.cols], wt.data(), X.cols, W.rows, b.data(), &Z.data[r * Z.cols]);
  }
}

void weight_grad(const Matrix& dZ, const Matrix& A, Matrix& dW, std::span<double> db) {
  check_weight_grad(dZ, A, dW, db);
  const auto outs = static_cast<std::ptrdiff_t>(dZ.cols);
  const bool big = dZ.rows * dZ.cols * A.cols >= kParallelWorkThreshold;
  // Each thread owns whole output rows of dW; rows are reduced in index order.
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t jj = 0; jj < outs; ++jj) {
    const auto j = static_cast<std::size_t>(jj);
    double* wrow = &dW.data[j * dW.cols];
    for (std::size_t k = 0; k < dW.cols; ++k) wrow[k] = 0.0;
    double bsum = 0.0;
    for (std::size_t i = 0; i < dZ.rows; ++i) {
      const double g = dZ(i, j);
      const double* arow = &A.data[i * A.cols];
      for (std::size_t k = 0; k < A.cols; ++k) wrow[k] += g * arow[k];
      bsum += g;
    }
    db[j] = bsum;
  }
}

void input_grad(const Matrix& dZ, const Matrix& W, Matrix& dA) {
  check_input_grad(dZ, W, dA);
  const auto n = static_cast<std::ptrdiff_t>(dZ.rows);
  const bool big = dZ.rows * dZ.cols * W.cols >= kParallelWorkThreshold;
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t ii = 0; ii < n; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* arow = &dA.data[i * dA.cols];
    for (std::size_t k = 0; k < dA.cols; ++k) arow[k] = 0.0;
    for (std::size_t j = 0; j < dZ.cols; ++j) {
      const double g = dZ(i, j);
      const double* wrow = &W.data[j * W.cols];
      for (std::size_t k = 0; k < W.cols; ++k) arow[k] += g * wrow[k];
    }
  }
}

}  // namespace parallel

}  // namespace bdann::kernels
