#pragma once

#include <cstddef>
#include <span>

#include "bdann/matrix.hpp"

// Dense-layer kernels. Every routine exists twice: a straight serial reference
// and an OpenMP version. Both accumulate each output element over the same
// index order, so their results are bitwise identical for any thread count.
namespace bdann::kernels {

namespace serial {

/// Z = X * W^T + b   (X: n x in, W: out x in, Z: n x out)
void affine_forward(const Matrix& X, const Matrix& W, std::span<const double> b, Matrix& Z);

/// dW = dZ^T * A, db = column sums of dZ.
void weight_grad(const Matrix& dZ, const Matrix& A, Matrix& dW, std::span<double> db);

/// dA = dZ * W
void input_grad(const Matrix& dZ, const Matrix& W, Matrix& dA);

}  // namespace serial

namespace parallel {

void affine_forward(const Matrix& X, const Matrix& W, std::span<const double> b, Matrix& Z);
void weight_grad(const Matrix& dZ, const Matrix& A, Matrix& dW, std::span<double> db);
void input_grad(const Matrix& dZ, const Matrix& W, Matrix& dA);

}  // namespace parallel

/// Multiply-add count below which the parallel kernels stay on one thread.
inline constexpr std::size_t kParallelWorkThreshold = 1u << 16;

}  // namespace bdann::kernels
