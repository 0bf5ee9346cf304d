#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bdann/data.hpp"
#include "bdann/pipeline.hpp"
#include "bdann/synthetic.hpp"

namespace bdann {

struct ColumnSpec {
  std::string name;
  std::string unit;
  bool allow_nonpositive = false;
};

/// Column layout of a tabular regression file.
struct TabularSchema {
  std::vector<ColumnSpec> inputs;
  ColumnSpec target;
  std::optional<std::string> base_column;  // supplied low-fidelity predictions

  /// D [mm], L [m], P [MPa], G [kg/m2/s], dh_sub_in [kJ/kg] -> q_cr [kW/m2],
  /// optional base column "base_pred" [kW/m2].
  static TabularSchema chf();
};

/// Sidecar JSON: {"units": {"D": "mm", ...}, "base_prediction": {"column": ..., "provenance": ...}}
struct TabularManifest {
  std::map<std::string, std::string> units;
  std::string base_provenance;
};
TabularManifest read_manifest(const std::filesystem::path& path);
/// Default sidecar location: the CSV path with ".manifest.json" appended.
std::filesystem::path manifest_path_for(const std::filesystem::path& csv);

struct RowError {
  std::size_t line = 0;  // 1-based; the header is line 1
  std::string message;
};

struct TabularDataset {
  Matrix X;
  Vector y;
  Vector base;                     // empty when the schema has no base column
  std::vector<std::size_t> lines;  // source line of every kept row
  std::vector<RowError> rejected;
};

/// Parses and validates a CSV. File-level problems (missing column, unit
/// mismatch against the manifest) throw DataError; bad rows are rejected and
/// reported with their line numbers.
TabularDataset read_tabular_csv(const std::filesystem::path& path, const TabularSchema& schema,
                                const std::optional<TabularManifest>& manifest);
void write_tabular_csv(const std::filesystem::path& path, const TabularSchema& schema,
                       const TabularDataset& data);

/// Partitions with the base column carried alongside each split.
struct TabularSplits {
  DomainSplits splits;
  Vector base_train, base_val, base_test;
  std::vector<RowError> rejected;
};

/// 80/5/15 train/val/test split from a seeded permutation; sizes are
/// round(0.8 n), round(0.05 n) and the remainder.
TabularSplits split_tabular(const TabularDataset& data, std::uint64_t seed, Domain domain);

/// read_tabular_csv with the sidecar manifest, then split_tabular.
TabularSplits ingest_csv(const std::filesystem::path& path, const TabularSchema& schema,
                         std::uint64_t seed, Domain domain = Domain::target);

/// Low-fidelity model evaluated per row. `column` is the supplied
/// base-prediction cell for that row (NaN when absent).
class BaseModel {
 public:
  virtual ~BaseModel() = default;
  virtual std::string tag() const = 0;
  /// Throws when the row cannot be evaluated.
  virtual double predict_row(std::span<const double> x, double column) const = 0;
};

class FunctionBaseModel : public BaseModel {
 public:
  FunctionBaseModel(std::string tag, std::function<double(std::span<const double>)> fn)
      : tag_(std::move(tag)), fn_(std::move(fn)) {}
  std::string tag() const override { return tag_; }
  double predict_row(std::span<const double> x, double column) const override;

 private:
  std::string tag_;
  std::function<double(std::span<const double>)> fn_;
};

/// Reads predictions from the data's base column.
class ColumnBaseModel : public BaseModel {
 public:
  explicit ColumnBaseModel(std::string tag) : tag_(std::move(tag)) {}
  std::string tag() const override { return tag_; }
  double predict_row(std::span<const double> x, double column) const override;

 private:
  std::string tag_;
};

struct ResidualSet {
  Vector residual;                 // y - base for kept rows
  Vector base;                     // base prediction for kept rows
  std::vector<std::size_t> kept;   // row indices into the input
  std::vector<RowError> excluded;  // rows where the base model failed (line = row index + 1)
};

/// r_i = y_i - base_i. `column` may be empty.
ResidualSet residual_targets(const Matrix& X, std::span<const double> y, std::span<const double> column,
                             const BaseModel& base);

/// Residual model plus the scaler mapping its outputs back to residual units.
struct HybridCorrector {
  std::string base_tag;
  TrainedModel model;
  ScalarScaler residual_scaler;
};

/// base + corrected residual. Stds are the corrector's, rescaled to residual
/// units; the base model is treated as exact. Throws ConfigError on a tag mismatch.
std::vector<PredictiveSummary> hybrid_predict(const Matrix& X, std::span<const double> column,
                                              const BaseModel& base, const HybridCorrector& corrector,
                                              int mc_samples = 200, std::uint64_t mc_seed = 0);

/// One domain of a hybrid task: raw features, true targets, optional base column per partition.
struct HybridDomain {
  DomainSplits splits;
  Vector base_train, base_val, base_test;
};

/// Called once per seed with that seed's correctors, the true targets of the
/// scored test rows and one prediction list per corrector. May run concurrently.
using CorrectorHook =
    std::function<void(std::uint64_t seed, const std::vector<HybridCorrector>& correctors, const Vector& truth,
                       const std::vector<std::vector<PredictiveSummary>>& predictions)>;

/// Trains residual correctors for every strategy and seed and scores the
/// composed prediction against the true target on the target test split.
/// Residuals are z-scored with the feature policy of each strategy. Test rows
/// the base model cannot evaluate are left out of the score.
std::vector<EnsembleSummary> run_hybrid_ensemble(const HybridDomain& source, const HybridDomain& target,
                                                 const BaseModel& base, const PipelineConfig& cfg,
                                                 std::span<const Strategy> strategies,
                                                 const EnsembleOptions& opts, const CorrectorHook& hook = {});

/// Builds correctors for one seed; exposed for inspection and the CLI.
std::vector<HybridCorrector> train_hybrid_correctors(const HybridDomain& source,
                                                     const HybridDomain& target, const BaseModel& base,
                                                     const PipelineConfig& cfg,
                                                     std::span<const Strategy> strategies,
                                                     std::uint64_t seed);

/// Smooth low-fidelity stand-in for the synthetic benchmark: the function
/// without its oscillatory terms, mapped through the benchmark's output scaler.
FunctionBaseModel synthetic_base_model(const QuantileSigmoidScaler& scaler);

}  // namespace bdann
