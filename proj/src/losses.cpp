#include "bdann/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "bdann/errors.hpp"

namespace bdann {

namespace {

void check_lengths(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw ShapeError(std::string(what) + ": length mismatch");
  if (a == 0) throw InvalidArgument(std::string(what) + ": empty input");
}

}  // namespace

double softplus(double x) {
  if (x > 30.0) return x;
  return std::log1p(std::exp(x));
}

double softplus_inverse(double y) {
  if (!(y > 0.0)) throw InvalidArgument("softplus_inverse: argument must be positive");
  if (y > 30.0) return y;
  return std::log(std::expm1(y));
}

double sigmoid(double x) { return activate(Activation::sigmoid, x); }

double mse_loss(std::span<const double> y_true, std::span<const double> y_pred) {
  check_lengths(y_true.size(), y_pred.size(), "mse_loss");
  double acc = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const double r = y_true[i] - y_pred[i];
    acc += r * r;
  }
  return acc / static_cast<double>(y_true.size());
}

double bce_loss(std::span<const double> d_true, std::span<const double> d_pred) {
  check_lengths(d_true.size(), d_pred.size(), "bce_loss");
  double acc = 0.0;
  for (std::size_t i = 0; i < d_true.size(); ++i) {
    const double p = std::clamp(d_pred[i], kProbClamp, 1.0 - kProbClamp);
    acc -= d_true[i] * std::log(p) + (1.0 - d_true[i]) * std::log(1.0 - p);
  }
  return acc / static_cast<double>(d_true.size());
}

double gaussian_nll(std::span<const double> y_true, std::span<const double> mean,
                    std::span<const double> variance) {
  check_lengths(y_true.size(), mean.size(), "gaussian_nll");
  check_lengths(y_true.size(), variance.size(), "gaussian_nll");
  const double log2pi = std::log(2.0 * std::numbers::pi);
  double acc = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (!(variance[i] > 0.0)) throw NumericError("gaussian_nll: non-positive variance");
    const double r = y_true[i] - mean[i];
    acc += 0.5 * (log2pi + std::log(variance[i])) + r * r / (2.0 * variance[i]);
  }
  return acc / static_cast<double>(y_true.size());
}

LossAndGrad loss_with_grad(Loss loss, const Matrix& output, std::span<const double> y) {
  const std::size_t n = output.rows;
  check_lengths(n, y.size(), "loss_with_grad");
  const double inv_n = 1.0 / static_cast<double>(n);
  LossAndGrad res;
  res.output_grad = Matrix(output.rows, output.cols);
  switch (loss) {
    case Loss::mse: {
      if (output.cols != 1) throw ShapeError("mse expects a single output column");
      for (std::size_t i = 0; i < n; ++i) {
        const double r = output(i, 0) - y[i];
        res.value += r * r;
        res.output_grad(i, 0) = 2.0 * r * inv_n;
      }
      res.value *= inv_n;
      break;
    }
    case Loss::bce: {
      if (output.cols != 1) throw ShapeError("bce expects a single output column");
      for (std::size_t i = 0; i < n; ++i) {
        const double raw = output(i, 0);
        const double p = std::clamp(raw, kProbClamp, 1.0 - kProbClamp);
        res.value -= y[i] * std::log(p) + (1.0 - y[i]) * std::log(1.0 - p);
        // The clamp is flat outside its interval.
        const bool inside = raw > kProbClamp && raw < 1.0 - kProbClamp;
        res.output_grad(i, 0) = inside ? (-y[i] / p + (1.0 - y[i]) / (1.0 - p)) * inv_n : 0.0;
      }
      res.value *= inv_n;
      break;
    }
    case Loss::gaussian_nll: {
      if (output.cols != 2) throw ShapeError("gaussian_nll expects (mean, raw variance) columns");
      const double log2pi = std::log(2.0 * std::numbers::pi);
      for (std::size_t i = 0; i < n; ++i) {
        const double mu = output(i, 0);
        const double raw = output(i, 1);
        const double var = predicted_variance(raw);
        const double r = y[i] - mu;
        res.value += 0.5 * (log2pi + std::log(var)) + r * r / (2.0 * var);
        res.output_grad(i, 0) = -r / var * inv_n;
        const double dvar = 0.5 / var - r * r / (2.0 * var * var);
        res.output_grad(i, 1) = dvar * sigmoid(raw) * inv_n;
      }
      res.value *= inv_n;
      break;
    }
  }
  if (!std::isfinite(res.value)) throw NumericError("loss is not finite");
  return res;
}

LossGradients backward(const NetworkState& net, const Matrix& X, std::span<const double> y,
                       Loss loss, bool train_mode, Rng* rng) {
  if (X.rows == 0) throw InvalidArgument("backward: empty batch");
  const auto cache = forward_cached(net, X, train_mode, rng);
  auto lg = loss_with_grad(loss, cache.output, y);
  auto bw = bdann::backward(net, cache, lg.output_grad);
  return {lg.value, std::move(bw.grads)};
}

}  // namespace bdann
