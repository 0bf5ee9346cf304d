#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bdann/adversarial.hpp"
#include "bdann/bayes.hpp"
#include "bdann/data.hpp"
#include "bdann/errors.hpp"
#include "bdann/metrics.hpp"
#include "bdann/net.hpp"
#include "bdann/optimizer.hpp"
#include "bdann/synthetic.hpp"

namespace bdann {

struct StageConfig {
  int max_epochs = 400;
  int patience = 20;
  std::size_t batch_size = 32;
  OptimizerConfig optimizer;

  /// Throws ConfigError naming `path` and the offending field.
  void validate(std::string_view path = "stage") const;

  /// 100 epochs, patience 10, batch 64, learning rate 1e-4.
  static StageConfig alignment_defaults();
};

/// Extractor, regression head and domain classifier topologies.
struct Architecture {
  NetworkSpec extractor;   // input -> latent
  NetworkSpec head;        // latent -> 1
  NetworkSpec classifier;  // latent -> 1, sigmoid output

  void validate() const;
  std::size_t latent_dim() const { return extractor.layer_sizes.back(); }

  /// 32-32 relu extractor, 16-unit relu head, one 64-unit relu classifier layer.
  static Architecture defaults(std::size_t input_dim);
};

enum class Strategy { from_scratch, direct_transfer, staged_bdann };
std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view s);

enum class TransferMode { frozen, partial, full };
std::string_view to_string(TransferMode m);
TransferMode parse_transfer_mode(std::string_view s);

/// Quantity Stage 3 early-stops on: the validation ELBO, or the squared error of
/// the MC predictive mean on the validation rows.
enum class Stage3Monitor { elbo, predictive_mse };
std::string_view to_string(Stage3Monitor m);
Stage3Monitor parse_stage3_monitor(std::string_view s);

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct EpochRecord {
  int epoch = 0;
  double learning_rate = 0.0;
  double train_loss = 0.0;
  double val_loss = kNaN;  // monitored quantity of the stage
  double lambda = kNaN;
  double val_auc = kNaN;
  double val_bce = kNaN;
  double head_source_val_mse = kNaN;
  double beta = kNaN;
  double kl = kNaN;
};

struct StageHistory {
  std::string stage;
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  double best_value = kNaN;
  int epochs_ran = 0;
  bool stopped_early = false;
};

/// DivergenceError carrying the history up to the failing epoch.
class TrainingDiverged : public DivergenceError {
 public:
  TrainingDiverged(const std::string& what, StageHistory history)
      : DivergenceError(what), history_(std::move(history)) {}
  const StageHistory& history() const { return history_; }

 private:
  StageHistory history_;
};

/// A trained network plus the input scaler it expects. Staged models carry the
/// variational network (extractor and head together); the others are deterministic.
struct TrainedModel {
  Strategy strategy = Strategy::from_scratch;
  ZScoreScaler input_scaler;
  NetworkState extractor;
  NetworkState head;
  std::optional<NetworkState> classifier;
  std::optional<VariationalState> variational;
  std::vector<StageHistory> history;
  std::uint64_t seed = 0;
  double final_val_auc = kNaN;

  bool bayesian() const { return variational.has_value(); }
  /// Deterministic extractor and head stacked.
  NetworkState network() const { return concat(extractor, head); }

  /// Predictions for unscaled inputs. Deterministic models report zero stds.
  std::vector<PredictiveSummary> predict(const Matrix& X_raw, int mc_samples = 200,
                                         std::uint64_t mc_seed = 0) const;
  Vector predict_mean(const Matrix& X_raw, int mc_samples = 200, std::uint64_t mc_seed = 0) const;
};

/// Source and target partitions handed to the pipeline, features unstandardised.
struct TransferData {
  DomainSplits source;
  DomainSplits target;
};
TransferData transfer_data(const Benchmark& b);

struct PipelineConfig {
  Architecture arch = Architecture::defaults(kSyntheticDim);
  StageConfig stage1;
  StageConfig stage2 = StageConfig::alignment_defaults();
  StageConfig stage3;
  StageConfig baseline;
  LambdaSchedule lambda;
  BetaSchedule beta;
  double posterior_init_std = kDefaultPosteriorInitStd;
  double stopping_gamma = 0.5;
  TransferMode transfer_mode = TransferMode::full;
  std::size_t partial_layers = 1;  // extractor layers unfrozen in partial mode
  int mc_samples = 200;
  int val_mc_samples = 10;  // weight draws for the Stage-3 validation objective
  Stage3Monitor stage3_monitor = Stage3Monitor::elbo;

  void validate() const;
};

/// Source-only MSE pretraining with early stopping on source validation MSE.
/// The scaler defaults to one fitted on the source training rows.
TrainedModel stage1_pretrain(const DomainSplits& source, const Architecture& arch,
                             const StageConfig& cfg, std::uint64_t seed,
                             std::optional<ZScoreScaler> scaler = std::nullopt);

/// Adversarial alignment of the extractor through a gradient-reversal junction.
/// The head is untouched. Validation uses the source and target val partitions.
TrainedModel stage2_align(const TrainedModel& model, const DomainSplits& source,
                          const DomainSplits& target, const Architecture& arch,
                          const LambdaSchedule& sched, const StageConfig& cfg, std::uint64_t seed,
                          double gamma = 0.5);

/// Variational fine-tuning on the target domain, early-stopped on `monitor`
/// evaluated over `val_mc_samples` weight draws.
TrainedModel stage3_finetune(const TrainedModel& model, const DomainSplits& target,
                             const BetaSchedule& beta_sched, const StageConfig& cfg,
                             std::uint64_t seed, double init_std = kDefaultPosteriorInitStd,
                             int val_mc_samples = 10, Stage3Monitor monitor = Stage3Monitor::elbo);

TrainedModel train_from_scratch(const DomainSplits& target, const Architecture& arch,
                                const StageConfig& cfg, std::uint64_t seed);

/// Fine-tunes a Stage-1 model on the target. `partial_layers` counts extractor
/// layers unfrozen from the top in partial mode.
TrainedModel train_direct_transfer(const TrainedModel& base, const DomainSplits& target,
                                   const StageConfig& cfg, TransferMode mode,
                                   std::size_t partial_layers, std::uint64_t seed);

/// Joint scaler over source and target training rows, as used by both TL strategies.
ZScoreScaler transfer_scaler(const TransferData& data);

/// Runs every requested strategy for one seed; the TL strategies share one
/// Stage-1 model. Results are returned in the order of `strategies`.
std::vector<TrainedModel> run_strategies(const TransferData& data, const PipelineConfig& cfg,
                                         std::span<const Strategy> strategies, std::uint64_t seed);

/// Scores a trained model on the common test split.
using Evaluator = std::function<MetricsReport(const TrainedModel&, const DataSplit& test)>;
/// Six error metrics of the predictive means.
MetricsReport evaluate_model(const TrainedModel& model, const DataSplit& test, int mc_samples = 200);

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;             // sample std over runs
  double ci_half_width = 0.0;   // 1.96 * std / sqrt(n)
  double raw_half_width = 0.0;  // 1.96 * std
  double lower() const { return mean - ci_half_width; }
  double upper() const { return mean + ci_half_width; }
};

struct RunResult {
  std::uint64_t seed = 0;
  MetricsReport report;
};

struct EnsembleSummary {
  Strategy strategy = Strategy::from_scratch;
  std::vector<RunResult> runs;   // successful runs, sorted by seed
  std::vector<std::string> failures;
  std::array<MetricSummary, 6> metrics{};
  const MetricSummary& metric(std::string_view name) const;
};

/// Mean and 95 % interval per metric. Input order does not matter; runs are
/// sorted by seed first. Throws Error when fewer than two runs are given.
EnsembleSummary aggregate_runs(Strategy strategy, std::vector<RunResult> runs);

struct EnsembleOptions {
  int n_runs = 20;
  std::uint64_t base_seed = 0;
  std::vector<std::uint64_t> seeds;  // overrides base_seed..base_seed+n_runs-1 when set
  int workers = 0;                   // 0 = OpenMP default
  std::function<void(std::uint64_t, const std::vector<TrainedModel>&)> on_run;  // optional hook
};

/// Expands opts into the run seeds; throws InvalidArgument when fewer than two.
std::vector<std::uint64_t> ensemble_seeds(const EnsembleOptions& opts);

/// One seed's metrics, one report per label, in label order.
using SeedRunner = std::function<std::vector<MetricsReport>(std::uint64_t seed)>;

/// Executes `run` for every seed (in parallel up to opts.workers), records
/// failures, and aggregates per label in seed order.
std::vector<EnsembleSummary> run_ensemble(std::span<const Strategy> labels, const EnsembleOptions& opts,
                                          const SeedRunner& run);

/// Seed ensemble over identical partitions. Failed runs are recorded and skipped.
std::vector<EnsembleSummary> run_seed_ensemble(const TransferData& data, const PipelineConfig& cfg,
                                               std::span<const Strategy> strategies,
                                               const EnsembleOptions& opts,
                                               const Evaluator& evaluate = {});

}  // namespace bdann
