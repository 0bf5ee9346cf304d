#include <gtest/gtest.h>

#include <cmath>

#include "bdann/errors.hpp"
#include "bdann/optimizer.hpp"
#include "gen.hpp"

using namespace bdann;
using bdann::testing::Gen;

TEST(Schedule, StaircaseDecay) {
  OptimizerConfig c;
  c.initial_learning_rate = 1e-3;
  c.decay_factor = 0.5;
  c.decay_every_epochs = 10;
  EXPECT_DOUBLE_EQ(c.learning_rate_at(0), 1e-3);
  EXPECT_DOUBLE_EQ(c.learning_rate_at(9), 1e-3);
  EXPECT_DOUBLE_EQ(c.learning_rate_at(10), 5e-4);
  EXPECT_DOUBLE_EQ(c.learning_rate_at(35), 1.25e-4);
  EXPECT_THROW(c.learning_rate_at(-1), InvalidArgument);
}

TEST(Schedule, ValidationRejectsBadFields) {
  OptimizerConfig c;
  c.decay_factor = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.initial_learning_rate = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.l2_penalty = -1;
  EXPECT_THROW(c.validate(), ConfigError);
}

// Independent restatement of the Adam update for one scalar.
struct ScalarAdam {
  double m = 0, v = 0;
  int t = 0;
  double step(double w, double g, double lr, double b1 = 0.9, double b2 = 0.999, double eps = 1e-8) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t)), vh = v / (1 - std::pow(b2, t));
    return w - lr * mh / (std::sqrt(vh) + eps);
  }
};

TEST(Adam, MatchesScalarReferenceOverManySteps) {
  Gen g(1);
  OptimizerConfig c;
  c.initial_learning_rate = 0.01;
  c.decay_every_epochs = 3;
  Adam adam(c);
  Vector w{0.3, -0.7}, grad(2);
  ScalarAdam r0, r1;
  double w0 = w[0], w1 = w[1];
  for (int s = 0; s < 40; ++s) {
    grad = {g.normal(), g.normal()};
    const ParamRef ref{"p", w, grad, false, true};
    adam.step(std::span<const ParamRef>(&ref, 1), s);
    w0 = r0.step(w0, grad[0], c.learning_rate_at(s));
    w1 = r1.step(w1, grad[1], c.learning_rate_at(s));
    EXPECT_NEAR(w[0], w0, 1e-15);
    EXPECT_NEAR(w[1], w1, 1e-15);
  }
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Adam adam;
  Vector w{1.0}, g{123.0};
  const ParamRef ref{"p", w, g, false, true};
  adam.step(std::span<const ParamRef>(&ref, 1), 0);
  EXPECT_NEAR(w[0], 1.0 - 1e-3, 1e-10);
}

TEST(Adam, L2AddsTwiceLambdaTimesWeight) {
  OptimizerConfig c;
  c.l2_penalty = 0.25;
  Adam with(c);
  Adam plain;
  Vector w1{2.0}, w2{2.0}, g{0.0}, g_eff{2 * 0.25 * 2.0};
  const ParamRef a{"p", w1, g, true, true};
  const ParamRef b{"p", w2, g_eff, false, true};
  with.step(std::span<const ParamRef>(&a, 1), 0);
  plain.step(std::span<const ParamRef>(&b, 1), 0);
  EXPECT_EQ(w1[0], w2[0]);
}

TEST(Adam, FrozenLayersAreUntouched) {
  NetworkSpec s;
  s.layer_sizes = {3, 4, 1};
  s.activations = {Activation::tanh, Activation::identity};
  auto net = NetworkState::initialize(s, 1);
  const auto before = net;
  auto g = Gradients::zeros_like(net);
  for (auto& m : g.weights) m.data.assign(m.data.size(), 1.0);
  for (auto& b : g.bias) b.assign(b.size(), 1.0);
  Adam adam;
  const bool mask[] = {false, true};
  for (int e = 0; e < 5; ++e) adam.step(net, g, e, mask);
  EXPECT_EQ(net.layers[0], before.layers[0]);
  EXPECT_NE(net.layers[1], before.layers[1]);
}

TEST(Adam, NonFiniteGradientLeavesParametersUnchanged) {
  Adam adam;
  Vector w{1.0, 2.0}, g{0.5, std::nan("")};
  const ParamRef ref{"blk", w, g, false, true};
  try {
    adam.step(std::span<const ParamRef>(&ref, 1), 0);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("blk[1]"), std::string::npos);
  }
  EXPECT_EQ(w, (Vector{1.0, 2.0}));
}
