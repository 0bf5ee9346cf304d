#include <gtest/gtest.h>

#include <cmath>

#include "bdann/errors.hpp"
#include "bdann/losses.hpp"
#include "bdann/net.hpp"
#include "bdann/rng.hpp"
#include "gen.hpp"

using namespace bdann;
using bdann::testing::Gen;
using bdann::testing::rel_err;

namespace {

NetworkSpec spec(std::vector<std::size_t> sizes, std::vector<Activation> acts) {
  NetworkSpec s;
  s.layer_sizes = std::move(sizes);
  s.activations = std::move(acts);
  return s;
}

// Loss of a full batch as a function of the parameters.
double batch_loss(const NetworkState& net, const Matrix& X, const Vector& y, Loss loss) {
  return loss_with_grad(loss, forward(net, X), y).value;
}

}  // namespace

TEST(Activation, DerivativesMatchFiniteDifferences) {
  Gen g(10);
  for (auto a : {Activation::tanh, Activation::sigmoid, Activation::identity, Activation::relu}) {
    for (int t = 0; t < 100; ++t) {
      double z = g.real(-4, 4);
      if (a == Activation::relu && std::abs(z) < 1e-3) z = 0.5;
      const double h = 1e-6;
      const double fd = (activate(a, z + h) - activate(a, z - h)) / (2 * h);
      EXPECT_NEAR(activate_derivative(a, z, activate(a, z)), fd, 1e-7) << to_string(a);
    }
  }
}

TEST(Activation, NamesRoundTrip) {
  for (auto a : {Activation::tanh, Activation::sigmoid, Activation::identity, Activation::relu})
    EXPECT_EQ(parse_activation(to_string(a)), a);
  EXPECT_THROW(parse_activation("swish"), InvalidArgument);
}

TEST(NetworkSpec, RejectsInconsistentTopology) {
  EXPECT_THROW(spec({3}, {}).validate(), InvalidArgument);
  EXPECT_THROW(spec({3, 4, 1}, {Activation::relu}).validate(), InvalidArgument);
  EXPECT_THROW(spec({3, 0, 1}, {Activation::relu, Activation::identity}).validate(), InvalidArgument);
  auto s = spec({3, 4, 1}, {Activation::relu, Activation::identity});
  s.dropout_rates = {0.5, 1.0};
  EXPECT_THROW(s.validate(), InvalidArgument);
}

TEST(NetworkState, InitialisationBoundsAndDeterminism) {
  const auto s = spec({5, 8, 3, 1}, {Activation::relu, Activation::tanh, Activation::identity});
  const auto a = NetworkState::initialize(s, 7);
  EXPECT_EQ(a, NetworkState::initialize(s, 7));
  EXPECT_NE(a, NetworkState::initialize(s, 8));
  EXPECT_EQ(a.parameter_count(), 5u * 8 + 8 + 8 * 3 + 3 + 3 + 1);
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    const auto& L = a.layers[l];
    const double lim = std::sqrt((L.activation == Activation::relu ? 6.0 : 3.0) / static_cast<double>(L.in()));
    for (double w : L.weights.data) EXPECT_LE(std::abs(w), lim);
    for (double b : L.bias) EXPECT_EQ(b, 0.0);
  }
  EXPECT_EQ(a.spec().layer_sizes, s.layer_sizes);
}

TEST(NetworkState, ConcatAndSplitAreInverse) {
  const auto s = spec({4, 6, 5, 1}, {Activation::tanh, Activation::tanh, Activation::identity});
  const auto net = NetworkState::initialize(s, 3);
  const auto [lo, hi] = split(net, 2);
  EXPECT_EQ(lo.layers.size(), 2u);
  EXPECT_EQ(hi.layers.size(), 1u);
  EXPECT_EQ(concat(lo, hi).layers, net.layers);
  Gen g(4);
  const auto X = g.matrix(6, 4);
  EXPECT_EQ(forward(hi, forward(lo, X)), forward(net, X));
}

TEST(NetworkState, CheckFiniteNamesTheParameter) {
  auto net = NetworkState::initialize(spec({2, 3, 1}, {Activation::tanh, Activation::identity}), 1);
  net.layers[1].weights(0, 2) = std::nan("");
  try {
    net.check_finite();
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("layer1"), std::string::npos);
  }
}

TEST(Forward, SingleRowMatchesBatch) {
  Gen g(5);
  const auto net = NetworkState::initialize(g.smooth_spec(4), 9);
  const auto X = g.matrix(5, 4);
  const auto Z = forward(net, X);
  for (std::size_t i = 0; i < X.rows; ++i) EXPECT_EQ(forward(net, X.row(i))[0], Z(i, 0));
}

TEST(Forward, HandComputedTwoLayerNetwork) {
  NetworkState net;
  DenseLayer a;
  a.weights = Matrix(2, 2);
  a.weights.data = {1.0, -1.0, 0.5, 2.0};
  a.bias = {0.0, -1.0};
  a.activation = Activation::relu;
  DenseLayer b;
  b.weights = Matrix(1, 2);
  b.weights.data = {3.0, -2.0};
  b.bias = {0.25};
  b.activation = Activation::identity;
  net.layers = {a, b};
  // x = (1, 2): hidden pre = (-1, 3.5), relu -> (0, 3.5); out = 0 - 7 + 0.25
  EXPECT_DOUBLE_EQ(forward(net, std::vector<double>{1.0, 2.0})[0], -6.75);
}

TEST(Forward, DropoutOnlyInTrainMode) {
  auto s = spec({3, 50, 1}, {Activation::tanh, Activation::identity});
  s.dropout_rates = {0.5, 0.0};
  const auto net = NetworkState::initialize(s, 2);
  Gen g(6);
  const auto X = g.matrix(4, 3);
  EXPECT_EQ(forward(net, X), forward(net, X, false, nullptr));
  Rng r1(1), r2(1);
  const auto a = forward(net, X, true, &r1);
  EXPECT_EQ(a, forward(net, X, true, &r2));
  EXPECT_NE(a, forward(net, X));
  const auto c = forward_cached(net, X, true, &r1);
  std::size_t zeros = 0;
  for (double m : c.masks[0].data) {
    EXPECT_TRUE(m == 0.0 || m == 2.0);
    zeros += m == 0.0;
  }
  EXPECT_GT(zeros, 0u);
  EXPECT_THROW(forward(net, X, true, nullptr), InvalidArgument);
}

TEST(Backward, ParameterGradientsMatchCentralDifferences) {
  Gen g(11);
  for (int t = 0; t < 20; ++t) {
    const std::size_t in = g.size(1, 4);
    const auto loss = g.coin() ? Loss::mse : Loss::gaussian_nll;
    auto net = NetworkState::initialize(g.smooth_spec(in, loss == Loss::mse ? 1 : 2), 100 + t);
    const auto X = g.matrix(g.size(1, 6), in);
    const auto y = g.vector(X.rows);
    const auto lg = backward(net, X, y, loss);
    EXPECT_NEAR(lg.loss, batch_loss(net, X, y, loss), 1e-12);
    const double h = 1e-5;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      auto& W = net.layers[l].weights.data;
      for (std::size_t k = 0; k < W.size(); ++k) {
        const double w0 = W[k];
        W[k] = w0 + h;
        const double up = batch_loss(net, X, y, loss);
        W[k] = w0 - h;
        const double dn = batch_loss(net, X, y, loss);
        W[k] = w0;
        EXPECT_LT(rel_err(lg.grads.weights[l].data[k], (up - dn) / (2 * h), 1e-6), 1e-5);
      }
      auto& b = net.layers[l].bias;
      for (std::size_t k = 0; k < b.size(); ++k) {
        const double b0 = b[k];
        b[k] = b0 + h;
        const double up = batch_loss(net, X, y, loss);
        b[k] = b0 - h;
        const double dn = batch_loss(net, X, y, loss);
        b[k] = b0;
        EXPECT_LT(rel_err(lg.grads.bias[l][k], (up - dn) / (2 * h), 1e-6), 1e-5);
      }
    }
  }
}

TEST(Backward, InputGradientMatchesCentralDifferences) {
  Gen g(12);
  const auto net = NetworkState::initialize(g.smooth_spec(3), 5);
  auto X = g.matrix(4, 3);
  const Matrix up(4, 1, 1.0);
  const auto res = backward(net, forward_cached(net, X), up);
  const double h = 1e-5;
  for (std::size_t k = 0; k < X.size(); ++k) {
    const double x0 = X.data[k];
    auto sum = [&] {
      double s = 0;
      for (double v : forward(net, X).data) s += v;
      return s;
    };
    X.data[k] = x0 + h;
    const double a = sum();
    X.data[k] = x0 - h;
    const double b = sum();
    X.data[k] = x0;
    EXPECT_LT(rel_err(res.input_grad.data[k], (a - b) / (2 * h), 1e-6), 1e-5);
  }
}

TEST(Gradients, ScaleAddAndMaxAbs) {
  const auto net = NetworkState::initialize(spec({2, 2, 1}, {Activation::tanh, Activation::identity}), 1);
  auto g = Gradients::zeros_like(net);
  EXPECT_EQ(g.max_abs(), 0.0);
  g.weights[0](1, 1) = -3.0;
  g.bias[1][0] = 2.0;
  auto h = g;
  h.add(g);
  h.scale(0.5);
  EXPECT_EQ(h.weights[0](1, 1), -3.0);
  EXPECT_EQ(h.max_abs(), 3.0);
}
