#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "bdann/errors.hpp"
#include "bdann/losses.hpp"
#include "gen.hpp"

using namespace bdann;
using bdann::testing::Gen;
using bdann::testing::rel_err;

TEST(Losses, BceAtUniformHalfIsLn2) {
  for (std::size_t n : {1u, 2u, 7u, 1000u}) {
    Gen g(n);
    const auto d = g.labels(std::max<std::size_t>(n, 2));
    const Vector p(d.size(), 0.5);
    EXPECT_NEAR(bce_loss(d, p), std::log(2.0), 1e-12);
  }
}

TEST(Losses, BceClampsExtremeProbabilities) {
  const Vector d{1.0, 0.0};
  const Vector p{0.0, 1.0};
  EXPECT_NEAR(bce_loss(d, p), -std::log(kProbClamp), 1e-9);
}

TEST(Losses, MseHandValues) {
  EXPECT_DOUBLE_EQ(mse_loss(Vector{1, 2, 3}, Vector{1, 2, 3}), 0.0);
  EXPECT_DOUBLE_EQ(mse_loss(Vector{0, 0}, Vector{1, 3}), 5.0);
  EXPECT_THROW(mse_loss(Vector{1}, Vector{1, 2}), ShapeError);
  EXPECT_THROW(mse_loss(Vector{}, Vector{}), InvalidArgument);
}

TEST(Losses, GaussianNllMatchesLogDensity) {
  Gen g(3);
  for (int t = 0; t < 100; ++t) {
    const double y = g.real(-3, 3), mu = g.real(-3, 3), var = g.real(0.01, 4);
    const double pdf = std::exp(-(y - mu) * (y - mu) / (2 * var)) / std::sqrt(2 * std::numbers::pi * var);
    EXPECT_NEAR(gaussian_nll(Vector{y}, Vector{mu}, Vector{var}), -std::log(pdf), 1e-10);
  }
  EXPECT_THROW(gaussian_nll(Vector{1}, Vector{1}, Vector{0}), NumericError);
}

TEST(Losses, SoftplusInverseRoundTrip) {
  Gen g(4);
  for (int t = 0; t < 200; ++t) {
    const double y = std::exp(g.real(-8, 4));
    EXPECT_LT(rel_err(softplus(softplus_inverse(y)), y), 1e-12);
  }
  EXPECT_THROW(softplus_inverse(0.0), InvalidArgument);
  EXPECT_EQ(softplus(40.0), 40.0);
}

TEST(Losses, OutputGradientsMatchCentralDifferences) {
  Gen g(5);
  for (auto loss : {Loss::mse, Loss::bce, Loss::gaussian_nll}) {
    for (int t = 0; t < 30; ++t) {
      const std::size_t n = g.size(1, 8);
      Matrix out(n, loss == Loss::gaussian_nll ? 2 : 1);
      for (auto& v : out.data) v = loss == Loss::bce ? g.real(0.05, 0.95) : g.real(-2, 2);
      const auto y = loss == Loss::bce ? g.labels(std::max<std::size_t>(n, 2)) : g.vector(n);
      if (y.size() != n) continue;
      const auto lg = loss_with_grad(loss, out, y);
      const double h = 1e-6;
      for (std::size_t k = 0; k < out.size(); ++k) {
        auto up = out, dn = out;
        up.data[k] += h;
        dn.data[k] -= h;
        const double fd = (loss_with_grad(loss, up, y).value - loss_with_grad(loss, dn, y).value) / (2 * h);
        EXPECT_LT(rel_err(lg.output_grad.data[k], fd, 1e-6), 1e-6);
      }
    }
  }
}

TEST(Losses, LossWithGradAgreesWithScalarForms) {
  Gen g(6);
  Matrix out(5, 2);
  for (auto& v : out.data) v = g.real(-1, 1);
  const auto y = g.vector(5);
  Vector mu(5), var(5);
  for (std::size_t i = 0; i < 5; ++i) {
    mu[i] = out(i, 0);
    var[i] = predicted_variance(out(i, 1));
  }
  EXPECT_NEAR(loss_with_grad(Loss::gaussian_nll, out, y).value, gaussian_nll(y, mu, var), 1e-14);
  EXPECT_THROW(loss_with_grad(Loss::mse, out, y), ShapeError);
}
