#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "bdann/losses.hpp"
#include "bdann/pipeline.hpp"
#include "gen.hpp"

using namespace bdann;
using bdann::testing::Gen;

namespace {

BenchmarkOptions small_options() {
  BenchmarkOptions o;
  o.source_train = 400;
  o.source_val = 100;
  o.source_test = 100;
  o.target_val = 60;
  o.target_test = 60;
  o.target_pool = 80;
  o.ablation_size = 80;
  return o;
}

PipelineConfig small_config() {
  PipelineConfig c;
  auto& a = c.arch;
  a.extractor.layer_sizes = {5, 12, 8};
  a.extractor.activations = {Activation::tanh, Activation::tanh};
  a.head.layer_sizes = {8, 6, 1};
  a.head.activations = {Activation::tanh, Activation::identity};
  a.classifier.layer_sizes = {8, 8, 1};
  a.classifier.activations = {Activation::relu, Activation::sigmoid};
  for (auto* s : {&c.stage1, &c.stage3, &c.baseline}) {
    s->max_epochs = 15;
    s->patience = 5;
    s->batch_size = 32;
    s->optimizer.initial_learning_rate = 3e-3;
  }
  c.stage2.max_epochs = 8;
  c.stage2.patience = 4;
  c.stage2.batch_size = 32;
  c.lambda.warmup_epochs = 2;
  c.lambda.total_epochs = 8;
  c.beta.total_epochs = 15;
  c.mc_samples = 20;
  c.val_mc_samples = 2;
  return c;
}

const TransferData& small_data() {
  static const TransferData d = transfer_data(make_benchmark(3, small_options()));
  return d;
}

}  // namespace

TEST(Config, ValidationNamesTheField) {
  auto c = small_config();
  c.validate();
  c.stage3.patience = 0;
  try {
    c.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("stage3.patience"), std::string::npos);
  }
  c = small_config();
  c.stage2.batch_size = 33;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.transfer_mode = TransferMode::partial;
  c.partial_layers = 3;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Names, StrategyAndModeRoundTrip) {
  for (auto s : {Strategy::from_scratch, Strategy::direct_transfer, Strategy::staged_bdann})
    EXPECT_EQ(parse_strategy(to_string(s)), s);
  for (auto m : {TransferMode::frozen, TransferMode::partial, TransferMode::full})
    EXPECT_EQ(parse_transfer_mode(to_string(m)), m);
  for (auto m : {Stage3Monitor::elbo, Stage3Monitor::predictive_mse})
    EXPECT_EQ(parse_stage3_monitor(to_string(m)), m);
  EXPECT_THROW(parse_strategy("adda"), ConfigError);
  EXPECT_THROW(parse_stage3_monitor("mae"), ConfigError);
}

TEST(Stage1, ImprovesSourceValidationLoss) {
  const auto& d = small_data();
  const auto c = small_config();
  const auto m = stage1_pretrain(d.source, c.arch, c.stage1, 1);
  ASSERT_EQ(m.history.size(), 1u);
  const auto& h = m.history[0];
  EXPECT_EQ(h.stage, "stage1");
  EXPECT_GE(h.best_epoch, 0);
  EXPECT_LT(h.best_value, h.epochs.front().val_loss + 1e-15);
  EXPECT_FALSE(m.bayesian());
}

TEST(Stage2, HeadIsBitwiseUnchangedAndLambdaFollowsSchedule) {
  const auto& d = small_data();
  const auto c = small_config();
  const auto s1 = stage1_pretrain(d.source, c.arch, c.stage1, 1);
  const auto s2 = stage2_align(s1, d.source, d.target, c.arch, c.lambda, c.stage2, 2);
  EXPECT_EQ(s2.head, s1.head);
  ASSERT_TRUE(s2.classifier.has_value());
  const auto& h = s2.history.back();
  EXPECT_EQ(h.stage, "stage2");
  for (const auto& e : h.epochs) {
    EXPECT_EQ(e.lambda, lambda_at(e.epoch, c.lambda));
    EXPECT_GE(e.val_auc, 0.0);
    EXPECT_LE(e.val_auc, 1.0);
  }
  EXPECT_TRUE(std::isfinite(s2.final_val_auc));
}

TEST(Stage3, InitialisationContract) {
  const auto& d = small_data();
  auto c = small_config();
  const auto s1 = stage1_pretrain(d.source, c.arch, c.stage1, 1);
  const auto s2 = stage2_align(s1, d.source, d.target, c.arch, c.lambda, c.stage2, 2);
  c.stage3.max_epochs = 0;
  const auto s3 = stage3_finetune(s2, d.target, c.beta, c.stage3, 3, 0.1);
  ASSERT_TRUE(s3.bayesian());
  const auto det = s2.network();
  const auto& vs = *s3.variational;
  for (std::size_t l = 0; l < det.layers.size(); ++l) {
    const auto& D = det.layers[l];
    const auto& V = vs.layers[l];
    for (std::size_t r = 0; r < D.out(); ++r) {
      for (std::size_t k = 0; k < D.in(); ++k) {
        EXPECT_EQ(V.weight_mean(r, k), D.weights(r, k));
        EXPECT_NEAR(softplus(V.weight_rho(r, k)), 0.1, 1e-15);
      }
      EXPECT_EQ(V.bias_mean[r], D.bias[r]);
    }
  }
  EXPECT_EQ(s3.extractor, s2.extractor);
}

TEST(Stage3, BothMonitorsTrackTheirBestEpoch) {
  const auto& d = small_data();
  const auto c = small_config();
  const auto s1 = stage1_pretrain(d.source, c.arch, c.stage1, 1);
  const auto s2 = stage2_align(s1, d.source, d.target, c.arch, c.lambda, c.stage2, 2);
  std::vector<double> firsts;
  for (auto m : {Stage3Monitor::elbo, Stage3Monitor::predictive_mse}) {
    const auto s3 = stage3_finetune(s2, d.target, c.beta, c.stage3, 3, 0.1, c.val_mc_samples, m);
    const auto& h = s3.history.back();
    ASSERT_FALSE(h.epochs.empty());
    double lo = h.epochs.front().val_loss;
    for (const auto& e : h.epochs) lo = std::min(lo, e.val_loss);
    EXPECT_EQ(h.best_value, lo) << to_string(m);
    EXPECT_EQ(h.epochs[h.best_epoch].val_loss, lo) << to_string(m);
    firsts.push_back(h.epochs.front().val_loss);
  }
  // the ELBO carries the KL term and the log-variance, so the two curves differ
  EXPECT_NE(firsts[0], firsts[1]);
  EXPECT_GT(firsts[1], 0.0);
}

TEST(Pipeline, TestSplitIsNeverReadDuringTraining) {
  const auto data = transfer_data(make_benchmark(4, small_options()));
  const auto c = small_config();
  const std::array all{Strategy::from_scratch, Strategy::direct_transfer, Strategy::staged_bdann};
  const auto models = run_strategies(data, c, all, 5);
  ASSERT_EQ(models.size(), 3u);
  EXPECT_EQ(data.target.test.reads(), 0u);
  EXPECT_EQ(data.source.test.reads(), 0u);
  EXPECT_EQ(models[0].strategy, Strategy::from_scratch);
  EXPECT_EQ(models[2].strategy, Strategy::staged_bdann);
  EXPECT_TRUE(models[2].bayesian());
  // The TL strategies share one Stage-1 model.
  EXPECT_EQ(models[1].history.front().epochs.size(), models[2].history.front().epochs.size());
}

TEST(Pipeline, ReproducibleForFixedSeed) {
  const auto& d = small_data();
  const auto c = small_config();
  const std::array s{Strategy::direct_transfer, Strategy::staged_bdann};
  const auto a = run_strategies(d, c, s, 11);
  const auto b = run_strategies(d, c, s, 11);
  for (std::size_t k = 0; k < s.size(); ++k) {
    const auto ra = evaluate_model(a[k], d.target.test, 20);
    const auto rb = evaluate_model(b[k], d.target.test, 20);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(metric_value(ra, i), metric_value(rb, i));
  }
}

TEST(DirectTransfer, FrozenAndPartialModesRespectTheMask) {
  const auto& d = small_data();
  const auto c = small_config();
  const auto base = stage1_pretrain(d.source, c.arch, c.stage1, 1);
  const auto frozen = train_direct_transfer(base, d.target, c.baseline, TransferMode::frozen, 1, 2);
  EXPECT_EQ(frozen.extractor, base.extractor);
  const auto partial = train_direct_transfer(base, d.target, c.baseline, TransferMode::partial, 1, 2);
  EXPECT_EQ(partial.extractor.layers[0], base.extractor.layers[0]);
  EXPECT_NE(partial.extractor.layers[1], base.extractor.layers[1]);
  const auto full = train_direct_transfer(base, d.target, c.baseline, TransferMode::full, 1, 2);
  EXPECT_NE(full.extractor.layers[0], base.extractor.layers[0]);
}

TEST(Predict, DeterministicModelsReportZeroStd) {
  const auto& d = small_data();
  const auto c = small_config();
  const auto m = train_from_scratch(d.target, c.arch, c.baseline, 4);
  const auto p = m.predict(d.target.val.features());
  const auto mean = m.predict_mean(d.target.val.features());
  for (std::size_t i = 0; i < p.size(); ++i) {
    EXPECT_EQ(p[i].total_std, 0.0);
    EXPECT_EQ(p[i].mean, mean[i]);
  }
}

TEST(Aggregate, CiFormulaAndPermutationInvariance) {
  Gen g(1);
  std::vector<RunResult> runs;
  for (std::uint64_t s = 0; s < 20; ++s) {
    MetricsReport r;
    for (std::size_t i = 0; i < 6; ++i) set_metric_value(r, i, g.real(1, 10));
    runs.push_back({s, r});
  }
  const auto a = aggregate_runs(Strategy::staged_bdann, runs);
  std::reverse(runs.begin(), runs.end());
  std::swap(runs[3], runs[11]);
  const auto b = aggregate_runs(Strategy::staged_bdann, runs);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(a.metrics[i].mean, b.metrics[i].mean);
    EXPECT_EQ(a.metrics[i].std, b.metrics[i].std);
    double m = 0, v = 0;
    for (const auto& r : runs) m += metric_value(r.report, i);
    m /= 20;
    for (const auto& r : runs) v += std::pow(metric_value(r.report, i) - m, 2);
    const double sd = std::sqrt(v / 19);
    EXPECT_NEAR(a.metrics[i].mean, m, 1e-12);
    EXPECT_NEAR(a.metrics[i].std, sd, 1e-12);
    EXPECT_NEAR(a.metrics[i].ci_half_width, 1.96 * sd / std::sqrt(20.0), 1e-12);
    EXPECT_NEAR(a.metrics[i].raw_half_width, 1.96 * sd, 1e-12);
  }
  EXPECT_EQ(&a.metric("r2"), &a.metrics[5]);
  EXPECT_EQ(a.runs.front().seed, 0u);
  EXPECT_THROW(aggregate_runs(Strategy::staged_bdann, {runs[0]}), Error);
}

TEST(Ensemble, FailuresAreRecordedAndSkipped) {
  const std::array labels{Strategy::from_scratch};
  EnsembleOptions o;
  o.n_runs = 5;
  o.base_seed = 10;
  o.workers = 2;
  const auto res = run_ensemble(labels, o, [](std::uint64_t seed) {
    if (seed == 12) throw DivergenceError("boom");
    MetricsReport r;
    r.mu_error_pct = static_cast<double>(seed);
    return std::vector<MetricsReport>{r};
  });
  ASSERT_EQ(res.size(), 1u);
  EXPECT_EQ(res[0].runs.size(), 4u);
  ASSERT_EQ(res[0].failures.size(), 1u);
  EXPECT_NE(res[0].failures[0].find("12"), std::string::npos);
  EXPECT_NEAR(res[0].metric("mu_error_pct").mean, (10 + 11 + 13 + 14) / 4.0, 1e-12);
  EXPECT_EQ(ensemble_seeds(o), (std::vector<std::uint64_t>{10, 11, 12, 13, 14}));
  o.n_runs = 1;
  EXPECT_THROW(ensemble_seeds(o), InvalidArgument);
}
