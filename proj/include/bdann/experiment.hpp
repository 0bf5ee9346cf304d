#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bdann/hpo.hpp"
#include "bdann/hybrid.hpp"
#include "bdann/pipeline.hpp"
#include "bdann/serialize.hpp"

namespace bdann {

enum class DatasetKind { synthetic, tabular };

struct DatasetConfig {
  DatasetKind kind = DatasetKind::synthetic;
  std::uint64_t seed = 2024;        // data generation / split seed
  std::size_t ablation_size = 500;  // synthetic target training rows
  bool identical_domains = false;
  std::filesystem::path source_csv;  // tabular only
  std::filesystem::path target_csv;  // tabular only
  std::string base_model = "column";  // hybrid: "column" or "smooth_synthetic"
};

struct HpoConfig {
  std::size_t architecture_budget = 40;
  std::size_t architecture_warm = 10;
  std::size_t training_budget = 40;
  std::size_t training_warm = 10;
  std::uint64_t seed = 0;
};

/// Pipeline settings used for the synthetic benchmark.
PipelineConfig benchmark_pipeline_defaults();

struct ExperimentConfig {
  std::string name = "experiment";
  std::vector<Strategy> strategies{Strategy::from_scratch, Strategy::direct_transfer, Strategy::staged_bdann};
  std::uint64_t seed = 0;  // single-run seed (train)
  DatasetConfig dataset;
  PipelineConfig pipeline = benchmark_pipeline_defaults();
  int n_runs = 20;
  std::uint64_t base_seed = 0;
  HpoConfig hpo;
  std::filesystem::path output_dir = "runs";
};

/// Parses a JSON config. Unknown keys and out-of-range values throw ConfigError
/// naming the field path, e.g. "stage3.batch_size". Relative CSV paths resolve
/// against `base_dir`.
ExperimentConfig config_from_json(const Json& j, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
/// Complete config with every default spelled out.
Json to_json(const ExperimentConfig& cfg);
/// FNV-1a 64 of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

/// Source/target partitions for the configured dataset.
TransferData load_transfer_data(const ExperimentConfig& cfg);

struct CommandOptions {
  std::filesystem::path out;   // run directory; empty = output_dir/name
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> ablation;
  int workers = 0;
  std::filesystem::path model;  // evaluate/calibrate input
};

/// Resolved run directory: --out, else $BDANN_OUTPUT_ROOT/name, else output_dir/name.
std::filesystem::path run_directory(const ExperimentConfig& cfg, const CommandOptions& opts);

/// Writes source.csv, target.csv, target_train.csv and manifest.json.
std::filesystem::path cmd_generate(ExperimentConfig cfg, const CommandOptions& opts);
/// Trains every strategy for one seed; one subdirectory per strategy.
std::filesystem::path cmd_train(ExperimentConfig cfg, const CommandOptions& opts);
/// Seed ensemble with a summary table. Returns nonzero failure count through `failures`.
std::filesystem::path cmd_ensemble(ExperimentConfig cfg, const CommandOptions& opts, std::size_t* failures = nullptr);
/// Scores a saved model on the configured test split.
MetricsReport cmd_evaluate(ExperimentConfig cfg, const CommandOptions& opts);
/// Calibration curves for the three uncertainty sources plus the rStd histogram.
std::filesystem::path cmd_calibrate(ExperimentConfig cfg, const CommandOptions& opts);
std::filesystem::path cmd_hpo(ExperimentConfig cfg, const CommandOptions& opts);
std::filesystem::path cmd_hybrid(ExperimentConfig cfg, const CommandOptions& opts, std::size_t* failures = nullptr);

/// Table-2 style CSV: one row per strategy, mean and CI half-width per metric.
std::string summary_table_csv(const std::vector<EnsembleSummary>& s);

}  // namespace bdann
