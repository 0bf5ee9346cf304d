#pragma once

#include <span>

#include "bdann/matrix.hpp"
#include "bdann/net.hpp"

namespace bdann {

enum class Loss { mse, bce, gaussian_nll };

/// Predicted probabilities are clamped to [kProbClamp, 1 - kProbClamp] before logs.
inline constexpr double kProbClamp = 1e-7;
/// Floor added to the positive-mapped variance output.
inline constexpr double kVarianceFloor = 1e-6;

double softplus(double x);
/// Inverse of softplus; requires y > 0.
double softplus_inverse(double y);
double sigmoid(double x);

/// Variance emitted by a (mean, raw) output pair.
inline double predicted_variance(double raw) { return softplus(raw) + kVarianceFloor; }

/// Mean squared residual.
double mse_loss(std::span<const double> y_true, std::span<const double> y_pred);

/// Mean binary cross-entropy with clamped probabilities.
double bce_loss(std::span<const double> d_true, std::span<const double> d_pred);

/// Mean Gaussian negative log-likelihood for predicted means and variances.
double gaussian_nll(std::span<const double> y_true, std::span<const double> mean,
                    std::span<const double> variance);

struct LossAndGrad {
  double value = 0.0;
  Matrix output_grad;  // d value / d network output
};

/// Loss of a batch of network outputs. For mse/bce the output has one column;
/// for gaussian_nll it has two: predicted mean and raw variance.
LossAndGrad loss_with_grad(Loss loss, const Matrix& output, std::span<const double> y);

struct LossGradients {
  double loss = 0.0;
  Gradients grads;
};

/// Loss value and exact parameter gradients for one batch.
LossGradients backward(const NetworkState& net, const Matrix& X, std::span<const double> y,
                       Loss loss, bool train_mode = false, Rng* rng = nullptr);

}  // namespace bdann
