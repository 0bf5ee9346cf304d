#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "bdann/hpo.hpp"

using namespace bdann;

namespace {

SearchSpace toy_space() {
  SearchSpace s;
  s.add_real("x", -2, 2).add_log_real("lr", 1e-5, 1e-1).add_int("n", 1, 8).add_categorical("act", {"relu", "tanh"});
  return s;
}

// Smooth bowl with its minimum at x = 0.5, lr = 1e-3, n = 4, act = tanh.
double bowl(const Params& p, std::uint64_t) {
  const double x = param_real(p, "x") - 0.5;
  const double l = std::log10(param_real(p, "lr")) + 3;
  const double n = static_cast<double>(param_int(p, "n") - 4);
  return x * x + l * l + 0.1 * n * n + (param_str(p, "act") == "tanh" ? 0.0 : 0.5);
}

}  // namespace

TEST(Space, SamplesStayInBoundsAndHaveTheDeclaredKinds) {
  const auto s = toy_space();
  Rng rng(1);
  for (int t = 0; t < 2000; ++t) {
    const auto p = s.sample(rng);
    ASSERT_TRUE(s.contains(p));
    EXPECT_TRUE(std::holds_alternative<double>(p.at("x")));
    EXPECT_TRUE(std::holds_alternative<std::int64_t>(p.at("n")));
    EXPECT_TRUE(std::holds_alternative<std::string>(p.at("act")));
    const auto q = s.perturb(p, 0.5, rng);
    EXPECT_TRUE(s.contains(q));
  }
}

TEST(Space, IntegerEndpointsAreReachable) {
  SearchSpace s;
  s.add_int("k", 1, 3);
  Rng rng(2);
  std::set<std::int64_t> seen;
  for (int t = 0; t < 500; ++t) seen.insert(param_int(s.sample(rng), "k"));
  EXPECT_EQ(seen, (std::set<std::int64_t>{1, 2, 3}));
}

TEST(Space, ValidationAndMidpoint) {
  SearchSpace bad;
  bad.add_real("a", 2, 1);
  EXPECT_THROW(bad.validate(), ConfigError);
  SearchSpace logbad;
  logbad.add_log_real("a", 0, 1);
  EXPECT_THROW(logbad.validate(), ConfigError);
  SearchSpace dup;
  dup.add_real("a", 0, 1).add_real("a", 0, 1);
  EXPECT_THROW(dup.validate(), ConfigError);
  const auto m = toy_space().midpoint();
  EXPECT_EQ(param_real(m, "x"), 0.0);
  EXPECT_NEAR(param_real(m, "lr"), 1e-3, 1e-15);
  EXPECT_EQ(param_str(m, "act"), "relu");
  EXPECT_THROW(param_int(m, "missing"), ConfigError);
}

TEST(Space, DefaultRanges) {
  const auto c = SearchSpace::classifier_defaults();
  c.validate();
  EXPECT_EQ(c.dims().size(), 9u);
  for (const auto& d : c.dims()) {
    if (d.name == "learning_rate") {
      EXPECT_EQ(d.kind, DimKind::log_real);
      EXPECT_EQ(d.lo, 1e-5);
      EXPECT_EQ(d.hi, 1e-4);
    }
    if (d.name == "warmup_epochs") { EXPECT_EQ(d.hi, 15.0); }
  }
  SearchSpace::architecture_defaults().validate();
}

TEST(Search, FindsTheBowlMinimumAndIsReproducible) {
  SearchOptions o;
  o.budget = 120;
  o.warm_random = 20;
  const auto a = run_search(toy_space(), bowl, 7, o);
  const auto b = run_search(toy_space(), bowl, 7, o);
  ASSERT_EQ(a.trials.size(), 120u);
  EXPECT_EQ(a.best, b.best);
  EXPECT_EQ(a.best_trial().objective, b.best_trial().objective);
  EXPECT_LT(a.best_trial().objective, 0.15);
  const auto rb = a.running_best();
  for (std::size_t i = 1; i < rb.size(); ++i) EXPECT_LE(rb[i], rb[i - 1]);
  EXPECT_EQ(rb.back(), a.best_trial().objective);
}

TEST(Search, ResultDoesNotDependOnWorkerCount) {
  SearchOptions o;
  o.budget = 40;
  o.warm_random = 8;
  o.round_size = 4;
  o.workers = 1;
  const auto a = run_search(toy_space(), bowl, 3, o);
  o.workers = 4;
  const auto b = run_search(toy_space(), bowl, 3, o);
  for (std::size_t i = 0; i < a.trials.size(); ++i) {
    EXPECT_EQ(to_json(a.trials[i].params), to_json(b.trials[i].params));
    EXPECT_EQ(a.trials[i].objective, b.trials[i].objective);
  }
}

TEST(Search, FailedTrialsAreRecorded) {
  SearchOptions o;
  o.budget = 20;
  o.warm_random = 5;
  const auto r = run_search(
      toy_space(),
      [](const Params& p, std::uint64_t s) {
        if (param_str(p, "act") == "relu") throw DivergenceError("diverged");
        return bowl(p, s);
      },
      1, o);
  std::size_t failed = 0;
  for (const auto& t : r.trials) {
    if (t.status == TrialStatus::failed) {
      ++failed;
      EXPECT_NE(t.error.find("diverged"), std::string::npos);
    }
  }
  EXPECT_GT(failed, 0u);
  EXPECT_EQ(r.best_trial().status, TrialStatus::completed);
  EXPECT_THROW(run_search(toy_space(), [](const Params&, std::uint64_t) { return std::nan(""); }, 1, o), Error);
  o.warm_random = 30;
  EXPECT_THROW(run_search(toy_space(), bowl, 1, o), ConfigError);
}

TEST(StagedSearch, SecondPhaseKeepsTheArchitectureFixed) {
  SearchSpace arch, train;
  arch.add_int("w", 1, 10);
  train.add_real("r", 0, 1);
  StagedSearchOptions o;
  o.architecture = {15, 5, 1, 1, {}};
  o.training = {15, 5, 1, 1, {}};
  const auto res = staged_search(
      arch, train,
      [&](const Params& a, const Params& t, std::uint64_t) {
        const double w = static_cast<double>(param_int(a, "w")), r = param_real(t, "r");
        return (w - 7) * (w - 7) + (r - 0.2) * (r - 0.2);
      },
      5, o);
  EXPECT_EQ(param_int(res.best_architecture, "w"), 7);
  EXPECT_NEAR(param_real(res.best_training, "r"), 0.2, 0.1);
  EXPECT_EQ(res.architecture.trials.size(), 15u);
  EXPECT_EQ(res.training.trials.size(), 15u);
}

TEST(Json, ParamsAndSpaceRoundTrip) {
  const auto s = toy_space();
  Rng rng(4);
  const auto p = s.sample(rng);
  const auto back = params_from_json(to_json(p), s);
  EXPECT_EQ(back, p);
  const auto s2 = space_from_json(to_json(s));
  ASSERT_EQ(s2.dims().size(), s.dims().size());
  for (std::size_t i = 0; i < s.dims().size(); ++i) {
    EXPECT_EQ(s2.dims()[i].name, s.dims()[i].name);
    EXPECT_EQ(s2.dims()[i].kind, s.dims()[i].kind);
    EXPECT_EQ(s2.dims()[i].lo, s.dims()[i].lo);
    EXPECT_EQ(s2.dims()[i].choices, s.dims()[i].choices);
  }
  for (auto k : {DimKind::integer, DimKind::real, DimKind::log_real, DimKind::categorical})
    EXPECT_EQ(parse_dim_kind(to_string(k)), k);
}

TEST(ApplyParams, WritesIntoThePipelineConfig) {
  PipelineConfig c;
  Params p{{"classifier_layers", std::int64_t{2}},
           {"classifier_neurons", std::int64_t{48}},
           {"classifier_dropout", 0.25},
           {"learning_rate", 5e-5},
           {"lambda_max", 0.8},
           {"warmup_epochs", std::int64_t{3}},
           {"extractor_layers", std::int64_t{3}},
           {"extractor_width", std::int64_t{24}},
           {"head_width", std::int64_t{12}},
           {"activation", std::string("tanh")},
           {"beta_max", 0.4}};
  apply_params(c, p, 5);
  EXPECT_EQ(c.arch.classifier.layer_sizes, (std::vector<std::size_t>{24, 48, 48, 1}));
  EXPECT_EQ(c.arch.extractor.layer_sizes, (std::vector<std::size_t>{5, 24, 24, 24}));
  EXPECT_EQ(c.arch.head.layer_sizes, (std::vector<std::size_t>{24, 12, 1}));
  EXPECT_EQ(c.arch.extractor.activations[0], Activation::tanh);
  EXPECT_EQ(c.stage2.optimizer.initial_learning_rate, 5e-5);
  EXPECT_EQ(c.lambda.lambda_max, 0.8);
  EXPECT_EQ(c.lambda.warmup_epochs, 3);
  EXPECT_EQ(c.beta.beta_max, 0.4);
  c.validate();
  EXPECT_THROW(apply_params(c, Params{{"bogus", 1.0}}, 5), ConfigError);
}
