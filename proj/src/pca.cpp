#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "bdann/errors.hpp"
#include "bdann/geometry.hpp"

namespace bdann {

Matrix Pca2d::project(const Matrix& points) const {
  if (points.cols != mean.size()) throw ShapeError("Pca2d::project: dimension mismatch");
  Matrix out(points.rows, 2);
  for (std::size_t i = 0; i < points.rows; ++i)
    for (std::size_t c = 0; c < 2; ++c) {
      double acc = 0.0;
      for (std::size_t j = 0; j < points.cols; ++j)
        acc += (points(i, j) - mean[j]) * components(c, j);
      out(i, c) = acc;
    }
  return out;
}

Pca2d pca_2d(const Matrix& train_X) {
  if (train_X.rows < 3) throw InvalidArgument("pca_2d: need at least 3 rows");
  if (train_X.cols < 2) throw InvalidArgument("pca_2d: need at least 2 features");
  const auto n = static_cast<Eigen::Index>(train_X.rows);
  const auto d = static_cast<Eigen::Index>(train_X.cols);
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> X(
      train_X.data.data(), n, d);
  const Eigen::RowVectorXd mu = X.colwise().mean();
  const Eigen::MatrixXd C = X.rowwise() - mu;
  const Eigen::MatrixXd cov = (C.transpose() * C) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success) throw NumericError("pca_2d: eigen decomposition failed");
  const auto& evals = es.eigenvalues();  // ascending
  const double top = evals(d - 1);
  const double second = evals(d - 2);
  if (!(top > 0.0) || second <= 1e-12 * top) throw DataError("pca_2d: data has rank < 2");

  Pca2d p;
  p.mean.assign(mu.data(), mu.data() + d);
  p.components = Matrix(2, train_X.cols);
  const double trace = evals.sum();
  for (int c = 0; c < 2; ++c) {
    Eigen::VectorXd v = es.eigenvectors().col(d - 1 - c);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    for (Eigen::Index j = 0; j < d; ++j) p.components(static_cast<std::size_t>(c), static_cast<std::size_t>(j)) = v(j);
    p.explained_variance[static_cast<std::size_t>(c)] = evals(d - 1 - c);
    p.explained_variance_ratio[static_cast<std::size_t>(c)] = evals(d - 1 - c) / trace;
  }
  return p;
}

}  // namespace bdann
